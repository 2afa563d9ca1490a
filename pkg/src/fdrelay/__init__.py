"""Full-duplex asynchronous cooperative relaying simulator.

Distributed linear convolutional space-time coding over one relay plus a
direct link: coding-matrix construction and shift-full-rank validation, a
sample-level full-duplex relay engine with loop cancellation, block
MMSE / MMSE-DFE / ML receivers over the delay-shifted effective system,
closed-form SINR analysis with amplifying-factor control, and a Monte Carlo
BER experiment harness with a CLI.
"""

from .analysis import (SinrReport, beta_star, gamma_dd, gamma_s1, gamma_s2,
                       p_idd, p_is1, p_is2, p_is2_from_taps, phi_approx,
                       phi_exact, phi_min, sinr_report)
from .coding import (GeneratorMatrix, convolution_matrix, delay_diversity_generator,
                     effective_code, is_sfr, scheme1_generator, scheme2_generator,
                     scheme2_power_beta, shifted_matrix)
from .core import (ChannelRealization, DelayProfile, SimConfig, draw_channel,
                   draw_delay_profile, qpsk_demodulate_hard, qpsk_modulate,
                   qpsk_slice, substream)
from .harness import (BerRecord, StoppingRule, SweepSpec, ber_standard_error,
                      fit_diversity_order, records_to_csv, run_point, run_sweep,
                      run_trial)
from .receiver import (DetectionResult, EffectiveSystem, build_effective_system,
                       detect, ml_detect, mmse_detect, mmse_dfe_detect)
from .relay import (OffMode, RelayTrace, ResidualAFMode, Scheme1Mode, Scheme2Mode,
                    destination_receive, optimal_beta, run_relay, scheme2_beta,
                    scheme2_transmit, scheme1_transmit)

__version__ = "0.1.0"

"""Saturated fiber-amplifier pulse shaping and two-photon Rydberg excitation modeling."""

__version__ = "0.1.0"

from .amplifier import (AmplifierParams, GainMediumMicro, PumpMap, edge_ratio, forward_amplify,
                        inverse_preshape, micro_to_reduced, output_energy, pump_to_gain,
                        reduced_to_micro)
from .calibration import (PlantConfig, PreshapeParams, SimulatedPlant, closed_loop_preshape,
                          eval_preshape, fit_amplifier_params, project_preshape, simulate_plant)
from .dynamics import (ExcitationConfig, NoiseModel, TraceResult, doppler_sigma, effective_rabi,
                       monte_carlo_rabi, monte_carlo_ramsey, propagate)
from .errors import PulseforgeError
from .fitting import DampedFit, fit_damped_sinusoid, fit_trace
from .sequencer import (BurstConfig, Interval, SequencePlan, TtlWindow, center_blue_pulse,
                        generate_burst, select_single_pulse)
from .waveform import TimeGrid, Waveform, WindowSpec, read_csv, rms_deviation, write_csv

"""Simulator-backed command-and-control for robotic tadpoles.

Subpackages by responsibility: actuation (crank-tendon-lever model and
marker synthesis), analysis (amplitude/frequency recovery and motion
scoring), runtime (firmware state machine), protocol (wire codec),
experiment (trial scheduling and care logging), gateway/server (the
long-running service), simdevice (device simulators), cli (operator
entry points).
"""

from .actuation import (ActuationConfig, MarkerFrame, MarkerStream, median_line,
                        signed_distance, simulate_markers, tail_amplitude,
                        tendon_displacement, lever_angle)
from .analysis import (AmplitudeEstimate, GrayFrame, estimate_amplitude,
                       estimate_frequency, motion_score, sweep_characterization)
from .experiment import (CareEvent, CareKind, EventLog, Stimulus, Trial,
                         guard_command, randomize_order, schedule_trial, summarize)
from .protocol import Ack, Cmd, Motion, Telemetry, decode, encode, frame_split
from .runtime import BurstSchedule, DeviceState, Mode, activate_mode, set_tension, stop, tick

__version__ = "0.1.0"

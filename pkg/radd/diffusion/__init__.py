"""
Absorbing discrete diffusion: schedules, state space and forward kernel.
"""

from .forward import ForwardKernel
from .schedule import NoiseSchedule, ScheduleValues
from .space import ExactJointTable, SequenceState, Vocab, conditional_of, sample_from_table

__all__ = [
    "ExactJointTable",
    "ForwardKernel",
    "NoiseSchedule",
    "ScheduleValues",
    "SequenceState",
    "Vocab",
    "conditional_of",
    "sample_from_table",
]

"""Anonymous round-based consensus, weak-sets and environment emulation.

Simulates processes without identities exchanging per-round message sets
under moving-source, eventually-synchronous and eventually-stable-source
schedules, and checks the resulting traces.
"""

from .checks import TraceIndex, validate_trace_env
from .consensus_es import EsConsensus
from .consensus_ess import EssConsensus, History, counter_merge, leader_predicate
from .emulation import Flood, run_emulation
from .giraf import Decide, HarnessError, Process, end_of_round, receive
from .scenario import CheckReport, Scenario, check_trace, fuzz, run
from .schedule import Schedule, Violation, generate_schedule, validate_schedule
from .sim import Simulation, run_simulation
from .trace import Trace
from .values import BOT
from .weakset import EMPTY, OpRecord, Register, WeakSetAutomaton, oracle_check, read_rule

__version__ = "0.1.0"

__all__ = [
    "BOT", "EMPTY", "CheckReport", "Decide", "EsConsensus", "EssConsensus", "Flood", "HarnessError",
    "History", "OpRecord", "Process", "Register", "Scenario", "Schedule", "Simulation", "Trace",
    "TraceIndex", "Violation", "WeakSetAutomaton", "check_trace", "counter_merge", "end_of_round",
    "fuzz", "generate_schedule", "leader_predicate", "oracle_check", "read_rule", "receive", "run",
    "run_emulation", "run_simulation", "validate_schedule", "validate_trace_env",
]

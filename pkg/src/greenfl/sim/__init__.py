"""Device populations, the event engine and energy attachment."""
from .accounting import Accounting, account, attach_energy, load_accounting
from .engine import RunResult, SessionRecord, run, run_async, run_sync
from .population import ClientDevice, generate_population, simulate_session

__all__ = [
    "Accounting",
    "ClientDevice",
    "RunResult",
    "SessionRecord",
    "account",
    "attach_energy",
    "generate_population",
    "load_accounting",
    "run",
    "run_async",
    "run_sync",
    "simulate_session",
]

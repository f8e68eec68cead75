"""A miniature serverless runtime with a proactive ``freshen`` hook, a
deterministic TCP model and an experiment harness."""

from .cache import MISS, CacheRecord, FreshenCache
from .engine import (EntryState, FreshenEntry, FreshenPlan, FreshenReport, FrState, Prefetch, WarmConnection,
                     fr_fetch, fr_wait, fr_warm, freshen, infer_plan)
from .functions import Compute, DataGet, DataPut, FunctionDef, FunctionValidationError, sample_lambda
from .harness import ExperimentReport, run_scenario, simulate
from .netsim import Network, SimConnection, SimEndpoint, WarmPolicy, plan_transfer
from .predictor import (AccountingLedger, ChainSpec, Edge, TriggerModel, on_event, predict_path_window,
                        predict_window, settle)
from .runtime import FreshenMode, InvocationRecord, RuntimeConfig, RuntimeContext, init, run
from .scenario import Scenario, load_scenario, validate_scenario
from .sim import Kernel

__version__ = "0.1.0"

__all__ = [
    "MISS", "CacheRecord", "FreshenCache",
    "EntryState", "FreshenEntry", "FreshenPlan", "FreshenReport", "FrState", "Prefetch", "WarmConnection",
    "fr_fetch", "fr_wait", "fr_warm", "freshen", "infer_plan",
    "Compute", "DataGet", "DataPut", "FunctionDef", "FunctionValidationError", "sample_lambda",
    "ExperimentReport", "run_scenario", "simulate",
    "Network", "SimConnection", "SimEndpoint", "WarmPolicy", "plan_transfer",
    "AccountingLedger", "ChainSpec", "Edge", "TriggerModel", "on_event", "predict_path_window",
    "predict_window", "settle",
    "FreshenMode", "InvocationRecord", "RuntimeConfig", "RuntimeContext", "init", "run",
    "Scenario", "load_scenario", "validate_scenario",
    "Kernel",
]

from koopnet.harness.episode import EpisodeSetup, StepRecord, actuator_fallback, run_episode, run_episodes  # noqa
from koopnet.harness.metrics import Metrics, aggregate_metrics, total_cost  # noqa
from koopnet.harness.sweeps import AXES, run_sweep  # noqa

from .commands import COMMANDS, Report, write_report
from .config import ExperimentConfig, build, load_config, validate

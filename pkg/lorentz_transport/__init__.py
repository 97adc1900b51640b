from .errors import *
from .extended_real import *
from .spacetime import *
from .lagrangian import *
from .cost import *
from .measures import *
from .kantorovich import *
from .check_report import REFERENCES, CheckReport, CheckFailure
from .potentials import *
from .transport import *
from .regularity import *
from .hook import Hook
from .pipeline import Pipeline, PipelineResult, RunConfig, Tolerances, run_pipeline, sweep, verify_files

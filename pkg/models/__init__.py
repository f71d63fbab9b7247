"""
Pydantic models for experiment configuration and run reports
"""

from .config_models import *
from .report_models import *

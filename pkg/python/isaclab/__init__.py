# Copyright (c) 2020, ISACLAB DEVELOPERS.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from isaclab.config import Scenario, SystemConfig, load_default, load_scenario
from isaclab.isaclab import (
    ConfigError,
    InfeasibleScenarioError,
    IsacLabError,
    SolverError,
    UnidentifiableGeometryError,
    _flush_logs,
    _initialize,
    is_initialized,
    reinitialize,
)

__version__ = "0.1.0"

# Library loggers stay silent until reinitialize() attaches a sink
_initialize()

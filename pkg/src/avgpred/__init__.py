"""Average-predictor feedback for switched linear systems with input delay.

The control law predicts the state one delay ahead using the element-wise
average of the modes, so no knowledge of future switching is needed. The
package covers simulation, the exact (oracle) predictor, the backstepping
transformation and the numerical stability certificate.
"""

from .certificates import Certificate, certify, decay_fit, epsilon, epsilon_star
from .errors import (AvgPredError, ConfigError, DimensionError, DomainError,
                     OracleUnavailableError, PreconditionError, SimulationError)
from .plant import InputHistory, SwitchedPlant, Trajectory, simulate
from .predictor import (AverageController, AverageSystem, ExactOracleController,
                        PredictionContext, SingleModeController, average_predictor,
                        exact_predictor, mean_system)
from .switching import SwitchingSignal, generate_random, periodic

__version__ = "0.1.0"

__all__ = [
    "AverageController", "AverageSystem", "AvgPredError", "Certificate", "ConfigError",
    "DimensionError", "DomainError", "ExactOracleController", "InputHistory",
    "OracleUnavailableError", "PredictionContext", "PreconditionError", "SimulationError",
    "SingleModeController", "SwitchedPlant", "SwitchingSignal", "Trajectory",
    "average_predictor", "certify", "decay_fit", "epsilon", "epsilon_star",
    "exact_predictor", "generate_random", "mean_system", "periodic", "simulate",
]

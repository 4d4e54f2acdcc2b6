from typing import List, Optional

import numpy as np


class BridgeSimError(Exception):
    """Root of all errors raised by bridgesim."""


class ArgumentError(BridgeSimError, ValueError):
    """A precondition on the arguments of an operation is violated."""


class NumericalError(BridgeSimError, ArithmeticError):
    """
    Non-finite values, failed factorizations or lost positive definiteness.
    Carries the grid node, time and state where the failure was detected.
    """

    def __init__(
        self,
        message: str,
        node: Optional[int] = None,
        time: Optional[float] = None,
        state: Optional[np.ndarray] = None,
    ):
        self.node = node
        self.time = time
        self.state = None if state is None else np.asarray(state)
        context = []
        if node is not None:
            context.append(f"node={node}")
        if time is not None:
            context.append(f"t={time:.6g}")
        if state is not None:
            context.append(f"x={np.array2string(self.state, precision=6)}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)


class OracleInfeasibleError(BridgeSimError):
    """Rejection oracle exhausted its forward budget without a single keep."""


class ConfigError(BridgeSimError):
    """Experiment config failed validation. Lists every violated field."""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("invalid config:\n  " + "\n  ".join(self.errors))

import logging


class DistOrderError(Exception):
    pass


class DomainError(DistOrderError, ValueError):
    pass


class ContractError(DistOrderError, ValueError):
    pass


class InverseCrimeError(ContractError):
    pass


class EvaluationError(DistOrderError, ArithmeticError):
    def __init__(self, message, node=None, t=None):
        super().__init__(message)
        self.node = node
        self.t = t


class InvariantError(DistOrderError, RuntimeError):
    pass


class ScenarioError(DistOrderError):
    pass


def log_invariant_breach(what, worst, tolerance, where=None):
    msg = f"{what}: worst deviation {worst:.3e} exceeds tolerance {tolerance:.1e}."
    if where is not None:
        msg += f" Located at {where}."
    logging.error(msg)

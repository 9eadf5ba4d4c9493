class HolokitError(Exception):
    pass


class DomainError(HolokitError, ValueError):
    pass


class NumericalFailure(HolokitError, ArithmeticError):
    pass


class SingularOverlapError(NumericalFailure):
    def __init__(self, sigma, tol, index=None):
        self.index = index
        self.sigma = sigma
        self.tol = tol

        where = "" if index is None else f" at step {index}"
        super().__init__(
            f"ill-conditioned overlap{where}: sigma_min={sigma:.3e} < tol={tol:.1e}"
        )


class ConventionError(DomainError):
    pass


class UsageError(HolokitError):
    pass


class ParseError(UsageError):
    def __init__(self, message, record=None):
        self.record = record

        where = "" if record is None else f"record {record}: "
        super().__init__(f"{where}{message}")


class RankDeficiencyError(DomainError):
    def __init__(self, message, index=None):
        self.index = index

        where = "" if index is None else f"step {index}: "
        super().__init__(f"{where}{message}")

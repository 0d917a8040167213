"""Domain errors. Commands map them to exit codes (config errors → 2, runtime errors → 3)."""


class NasError(Exception):
    """Base for every error raised by the services layer."""


# ----- config / data errors -----
class SpaceConfigError(NasError, ValueError):
    """Invalid search space definition (empty op list, identity on a transition layer, ...)."""


class SpaceTooLargeError(NasError, ValueError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"Search space has {size} architectures, above the enumeration cap of {cap}.")
        self.size = size
        self.cap = cap


class SnapshotError(NasError, ValueError):
    """Malformed tree snapshot or snapshot taken over a different space."""


class BenchmarkFormatError(NasError, ValueError):
    """Benchmark file does not match its space or violates the entry contract."""


class RankingMismatchError(NasError, ValueError):
    """Two rankings compared over different item sets."""


# ----- runtime errors -----
class BudgetStallError(NasError, RuntimeError):
    def __init__(self, budget: int, window: tuple[float, float], tries: int):
        lo, hi = window
        super().__init__(
            f"No architecture with FLOPs in [{lo * budget:.0f}, {hi * budget:.0f}] "
            f"({lo}x..{hi}x of budget {budget}) after {tries} draws."
        )
        self.budget = budget
        self.window = window
        self.tries = tries


class EvaluatorError(NasError, RuntimeError):
    """Evaluator failed or returned an invalid value; message carries iteration/path context."""

from typing import List, Optional

class DomainError(ValueError):
    """
    Argument outside the mathematical domain of an operation (|m| > ell, t <= 0, C <= 0, ...)
    """

class ConfigError(Exception):
    """
    Invalid run configuration; message starts with the dotted field path when one applies
    """
    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field

class TrainingDivergence(Exception):
    def __init__(self, epoch: int, batch: int, loss: float, last_finite_loss: Optional[float]):
        super().__init__(f"Training diverged at epoch {epoch + 1}, batch {batch}: loss={loss}, last finite loss={last_finite_loss}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        self.last_finite_loss = last_finite_loss

class CheckFailure(Exception):
    def __init__(self, failed: List[str]):
        super().__init__("Failed checks: " + ", ".join(failed))
        self.failed = failed

class TrainerError(Exception):
    """Base class for trainer failures."""


class DataError(TrainerError):
    """Dataset directory missing, malformed, or lacking required GT."""


class TrainingDivergedError(TrainerError):
    """Loss went non-finite; carries diagnostics about the failing step."""

    def __init__(self, message: str, iteration: int, recent_losses=None):
        super().__init__(message)
        self.iteration = iteration
        self.recent_losses = list(recent_losses or [])


class CheckpointError(TrainerError):
    """Checkpoint missing or incompatible with the current code."""

"""Exception hierarchy for motiondb."""


class MotionDBError(Exception):
    pass


# geometry
class NoEventFound(MotionDBError):
    """No positive impact root: the arena is open or the state is corrupt."""


class EventSkipped(MotionDBError):
    pass


class PlacementInfeasible(MotionDBError):
    pass


class InvalidArena(MotionDBError):
    pass


# chaos / statistics
class HorizonTooShort(MotionDBError):
    pass


class NoObstacles(MotionDBError):
    pass


class InsufficientSample(MotionDBError):
    pass


# shards and crypto
class InvalidShardCount(MotionDBError):
    pass


class SerializationFailure(MotionDBError):
    pass


class AuthenticationError(MotionDBError):
    """Authenticated decryption rejected the ciphertext."""


class NotEnoughBalls(MotionDBError):
    pass


class SchemaError(MotionDBError):
    """Table data does not match its declared schema."""


# queries
class PlanError(MotionDBError):
    """Plan does not validate against the table schemas."""


class TypeMismatch(MotionDBError):
    pass


class MissingShard(MotionDBError):
    pass


class DuplicateShard(MotionDBError):
    pass


class SQLSyntaxError(MotionDBError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        pointer = ""
        if text:
            pointer = f"\n  {text}\n  {' ' * position}^"
        super().__init__(f"{message} at position {position}{pointer}")


# orchestration
class ConfigError(MotionDBError):
    pass


class PhaseError(MotionDBError):
    """Operation not allowed in the epoch's current phase."""


class AuthFailureOnClaimedMatch(MotionDBError):
    pass


class ConvergenceTimeout(MotionDBError):
    def __init__(self, sim_time: float, delivered, undelivered):
        self.sim_time = sim_time
        self.delivered = sorted(delivered)
        self.undelivered = sorted(undelivered)
        super().__init__(
            f"no convergence by t={sim_time:.6g}: "
            f"{len(self.undelivered)} shard(s) undelivered {self.undelivered}"
        )


class ReplayMismatch(MotionDBError):
    """A logged event does not match the recomputed dynamics."""

"""Exception hierarchy; the CLI maps each family to an exit code."""


class OffloadSimError(Exception):
    pass


class ConfigError(OffloadSimError, ValueError):
    """Malformed or inconsistent scenario, preset or hardware description."""


class InfeasibleError(OffloadSimError):
    """The workload cannot run on the given machine."""


class ScheduleError(InfeasibleError):
    """Task graph construction failed (e.g. a prefetch unit larger than its FIFO)."""


class SimulationError(OffloadSimError):
    pass


class DeadlockError(SimulationError):
    def __init__(self, blocked):
        self.blocked = sorted(blocked)
        preview = ", ".join(self.blocked[:8])
        more = "" if len(self.blocked) <= 8 else f" (+{len(self.blocked) - 8} more)"
        super().__init__(f"deadlock: no runnable task, blocked: {preview}{more}")


class MemoryCapacityError(SimulationError):
    def __init__(self, task_id, resource, usage, capacity):
        self.task_id = task_id
        self.resource = resource
        super().__init__(
            f"task {task_id} pushes {resource} to {usage:.4g} B, capacity {capacity:.4g} B"
        )

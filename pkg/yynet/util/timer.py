import time

import structlog


log = structlog.get_logger()


class Timer:
    """
    Context manager logging the start and end of a task with its elapsed time.
    An optional leading boolean argument turns it off, as in `Timer(False, "quiet task")`.
    """

    def __init__(self, *description_args):
        if description_args and type(description_args[0]) == bool:
            self.active = description_args[0]
            description_args = description_args[1:]
        else:
            self.active = True
        self.description = " ".join(str(a) for a in description_args)
        self.start = None
        self.end = None

    def __enter__(self):
        self.start = time.time()
        if self.active:
            log.info("started", task=self.description)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.end = time.time()
        if self.active:
            log.info(
                "finished",
                task=self.description,
                seconds=round(self.elapsed, 2),
            )

    @property
    def elapsed(self):
        end = self.end if self.end is not None else time.time()
        return end - self.start

import os

import numpy as np
import structlog
import torch


log = structlog.get_logger()


def join(xs, sep=", "):
    return sep.join([str(x) for x in xs])


def check_that_exception_is_thrown(thunk, exception_type):
    if isinstance(exception_type, BaseException):
        raise Exception(
            f"check_that_exception_is_thrown received an exception instance rather than an exception type: "
            f"{exception_type}"
        )
    try:
        thunk()
    except exception_type:
        return
    except Exception as e:
        raise AssertionError(f"Should have thrown {exception_type.__name__} but instead threw {type(e).__name__}: {e}")
    raise AssertionError(f"Should have thrown {exception_type.__name__}")


def try_noisy_test_up_to_n_times(noisy_test, n=3):
    """
    Runs `noisy_test(attempt)` for attempt = 0, 1, ... until it passes, up to n times.
    For learning tests whose outcome depends on the seed; the attempt index picks a fresh one.
    The last AssertionError is re-raised if no attempt passes.
    """
    for attempt in range(n):
        try:
            noisy_test(attempt)
            return
        except AssertionError as e:
            if attempt == n - 1:
                raise
            log.warning("noisy test failed; trying again", attempt=attempt, error=str(e))


def check_path_like(path, caller=None):
    try:
        os.fspath(path)
    except TypeError:
        raise TypeError(("E" if caller is None else f"{caller} e") + f"xpected path-like object but got {path}")


def derive_seed(*components):
    """
    Combines integers into a single 63-bit seed, so that (seed, epoch) pairs
    and similar tuples get independent, reproducible random streams.
    """
    state = np.random.SeedSequence([int(c) for c in components]).generate_state(1, np.uint64)[0]
    return int(state) & 0x7FFFFFFFFFFFFFFF


def generator_from_seed(*components):
    generator = torch.Generator()
    generator.manual_seed(derive_seed(*components))
    return generator


def set_num_threads(num_threads):
    if num_threads is not None and num_threads > 0:
        torch.set_num_threads(num_threads)
        log.debug("torch threads", num_threads=num_threads)

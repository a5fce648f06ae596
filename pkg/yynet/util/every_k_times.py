class EveryKTimes:
    """Provides an object that runs a given function every k-th time it is invoked, passing along its arguments"""

    def __init__(self, function, k):
        self.function = function
        self.k = k
        self.counter = 0

    def __call__(self, *args, **kwargs):
        if self.k <= 0:
            return None
        self.counter += 1
        if self.counter == self.k:
            self.counter = 0
            return self.function(*args, **kwargs)
        return None

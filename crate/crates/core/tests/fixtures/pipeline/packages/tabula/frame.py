class Frame:
    """Two-dimensional labelled table."""

    def __init__(self, data=None):
        """Create a frame from a mapping of column names to values."""
        self.data = dict(data or {})

    def head(self, n=5):
        """Return the first n rows.

        Useful for a quick look at the data.
        """
        return Frame({k: v[:n] for k, v in self.data.items()})

    def describe(self):
        """Generate descriptive statistics for each numeric column."""
        return Frame()

    def groupby(self, key):
        """Group rows by the values of a column."""
        return self

    def dropna(self):
        """Remove rows with missing values."""
        return self

    def merge(self, other, on):
        """Join two frames on a shared column."""
        return self

    def _check(self):
        """Internal consistency check."""
        return True


def read_csv(path, sep=","):
    """Read a comma-separated values file into a frame."""
    return Frame()


def concat(frames):
    """Concatenate frames along the rows."""
    return Frame()

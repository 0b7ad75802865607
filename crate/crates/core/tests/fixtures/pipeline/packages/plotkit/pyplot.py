"""State-based plotting interface."""


def plot(x, y=None):
    """Plot y versus x as lines and/or markers."""


def hist(x, bins=10):
    """Compute and plot a histogram."""


def scatter(x, y):
    """A scatter plot of y versus x."""


def show():
    """Display all open figures."""


def title(text):
    """Set a title for the axes."""


def xlabel(text):
    """Set the label for the x-axis."""

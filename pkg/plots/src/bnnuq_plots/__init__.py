from .render import FigureSpec, MissingInputError, plot_experiment  # noqa: F401

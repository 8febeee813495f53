"""tipcast: stochastic ocean box-model tipping trajectories and a TFT surrogate."""

__version__ = "0.1.0"


def engine_info() -> dict:
    """Which implementation backs each hot kernel ("cython" or "numpy")."""
    from . import boxmodel, sdtw

    return {"boxmodel": boxmodel.ENGINE, "sdtw": sdtw.ENGINE}

import sys
from functools import cache
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from gradedmech import cli  # noqa: E402
from gradedmech import lagrange as lg  # noqa: E402

BUNDLED = ["oscillator", "t2r_quadratic", "so3_free", "javelin", "hamel_so3", "lp_constant_A"]


@cache
def bundled(name: str):
    """(system, lagrangian, initial point, initial pi^2..pi^k, t_end, h)."""
    system = cli.build_system(cli.load_config(name))
    t_end, h, _, init = cli._simulation_settings(system)
    p, pis = cli.initial_lagrangian_state(system, init)
    return system, system.lagrangian, p, pis, t_end, h


@cache
def trajectory(name: str, t_end: float | None = None, residual_every: int = 0):
    system, L, p, pis, full, h = bundled(name)
    return lg.integrate(L, p, pis, full if t_end is None else t_end, h, residual_every=residual_every)

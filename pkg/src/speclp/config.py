"""Central numerical defaults.

Every window, spacing and tolerance used by the library lives in one
``Settings`` record so that a run is reproducible from its config alone.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace


@dataclass(frozen=True)
class Settings:
    # spatial discretisation
    x_window: tuple[float, float] = (-40.0, 40.0)
    dx: float = 0.01
    k_max: float = 64.0

    # Volterra / Neumann iteration
    volterra_spacing: float = 0.01
    neumann_tol: float = 1e-12
    neumann_maxiter: int = 200
    tail_eps: float = 1e-16
    k_chunk: int = 192

    # Marchenko
    marchenko_spacing: float = 0.01
    marchenko_max_nodes: int = 1400
    marchenko_min_nodes: int = 800

    # scattering
    tol_res_rel: float = 1e-3
    t_floor: float = 0.01
    branch_overlap: tuple[float, float] = (0.5, 2.0)
    bound_kappa_samples: int = 200

    # spectral calculus
    jrange: tuple[int, int] = (-6, 6)
    lambda_points: int = 512
    kernel_dx: float = 0.1
    kernel_window: tuple[float, float] = (-40.0, 40.0)
    decay_rows: tuple[float, float] = (-10.0, 10.0)
    decay_cols: tuple[float, float] = (-200.0, 200.0)
    pass_ratio: float = 10.0
    fail_growth: float = 100.0

    # Hermite / Laguerre
    gauss_c: float = 0.2

    threads: int = 1
    extra: dict = field(default_factory=dict)

    def scaled(self, factor: float) -> "Settings":
        """Refine (factor < 1) or coarsen every grid spacing together."""
        return replace(
            self,
            dx=self.dx * factor,
            volterra_spacing=self.volterra_spacing * factor,
            marchenko_spacing=self.marchenko_spacing * factor,
            kernel_dx=self.kernel_dx * factor,
        )

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT = Settings()

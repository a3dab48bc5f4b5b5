"""Cap pricing under the LIBOR market model with classical Monte Carlo,
hybrid Monte Carlo plus amplitude estimation, and pure amplitude estimation
on a statevector simulator."""

from .errors import (
    CapacityError,
    CapQaeError,
    ContractViolation,
    DatasetError,
    DomainError,
    EstimationError,
    ExpiredCapletError,
    InsufficientSamplesError,
    UnitWarning,
)
from .lmm import (
    CapSpec,
    ForwardCurve,
    MarketDataset,
    TenorStructure,
    VolSurface,
    black76_cap,
    black76_caplet,
    bond_prices,
    caplet_vol,
)
from .montecarlo import PriceEstimate, RngStream, mc_cap_price
from .pricers import (
    MethodConfig,
    convergence_experiment,
    hybrid_cap_price,
    pure_quantum_cap_price,
    qubit_count,
    qubit_sweep_experiment,
)

__version__ = "0.1.0"

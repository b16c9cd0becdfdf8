"""F-16 short-period benchmark with multiplicative noise.

State is [angle of attack, pitch rate, elevator deflection], one control
channel and one disturbance channel, attenuation level 1, unit state cost.
A reference solution and a non-optimal learning warm start ship with the
benchmark; the reference matrices are tabulated to 4 decimals.
"""

import numpy as np

from .model import CostSpec, GainPair, SdltiSystem, ValuePair

_A1 = [
    [0.906488, 0.0816012, -0.0005],
    [0.0741349, 0.90121, -0.000708383],
    [0.0, 0.0, 0.132655],
]
_A2 = [
    [0.0072, 0.0026, 0.0001],
    [0.0041, 0.0917, 0.0072],
    [0.0, 0.0, 0.0505],
]
_B1 = [[-0.00150808], [-0.0096], [0.867345]]
_C1 = [[0.00951892], [0.00038373], [0.0]]
_C2 = [[0.00156], [0.00037], [0.0]]

_P1_REF = [
    [-16.3448, -13.4481, 0.0079],
    [-13.4481, -17.2342, 0.0067],
    [0.0079, 0.0067, -1.0101],
]
_P2_REF = [
    [16.9864, 14.0870, -0.0082],
    [14.0870, 17.8859, -0.0070],
    [-0.0082, -0.0070, 1.0101],
]
_K1_REF = [[0.1559, 0.1353, 0.0]]
_K2_REF = [[0.0949, 0.1097, -0.0661]]

_K1_INIT = [[0.6305, 1.6421, -1.0436]]
_K2_INIT = [[2.7695, 0.1328, -0.1702]]

X0 = np.array([10.0, 5.0, -2.0])


def f16_system():
    """The benchmark (system, cost) pair: gamma = 1, Q = I."""
    return SdltiSystem(_A1, _A2, _B1, _C1, _C2), CostSpec(1.0, np.eye(3))


def f16_reference():
    """Bundled reference values and gains (4-decimal precision)."""
    return ValuePair(_P1_REF, _P2_REF), GainPair(_K1_REF, _K2_REF)


def f16_initial_gains():
    """Non-optimal warm start used by the benchmark learning runs."""
    return GainPair(_K1_INIT, _K2_INIT)

"""Daubechies extremal-phase scaling filters, embedded as high-precision literals.

Coefficients are normalized so that sum(g) = sqrt(2) and sum(g**2) = 1.
The wavelet (detail) filter is derived by the quadrature-mirror relation
h[i] = (-1)**i * g[L-1-i].
"""

import math

import numpy as np

from ..errors import ConfigError

# filter length (= 2 * vanishing moments) -> scaling coefficients
_SCALING = {
    2: (
        0.7071067811865475244,
        0.7071067811865475244,
    ),
    4: (
        0.48296291314453414337,
        0.83651630373780790558,
        0.22414386804201338103,
        -0.12940952255126038117,
    ),
    6: (
        0.332670552950082616,
        0.80689150931109257649,
        0.4598775021184915701,
        -0.1350110200102545887,
        -0.085441273882026661693,
        0.035226291885709536603,
    ),
    8: (
        0.23037781330889650086,
        0.71484657055291564709,
        0.63088076792985890788,
        -0.027983769416859854211,
        -0.18703481171909308408,
        0.030841381835560763627,
        0.032883011666885199735,
        -0.010597401785069032105,
    ),
    10: (
        0.16010239797419291448,
        0.60382926979718967054,
        0.72430852843777292773,
        0.13842814590132073151,
        -0.24229488706638203186,
        -0.032244869584638374648,
        0.077571493840045713523,
        -0.0062414902127982742742,
        -0.012580751999081999469,
        0.003335725285473771278,
    ),
    12: (
        0.11154074335010946362,
        0.49462389039845308568,
        0.75113390802109535068,
        0.31525035170919762909,
        -0.22626469396543982008,
        -0.12976686756726193556,
        0.097501605587323049102,
        0.027522865530305728626,
        -0.031582039317486029565,
        0.00055384220116149613925,
        0.0047772575109455106396,
        -0.0010773010853084795649,
    ),
    14: (
        0.07785205408500917902,
        0.39653931948191730654,
        0.72913209084623511992,
        0.46978228740519312247,
        -0.14390600392856497541,
        -0.22403618499387498264,
        0.071309219266830264751,
        0.080612609151083071913,
        -0.03802993693501441358,
        -0.016574541630666880654,
        0.012550998556099840613,
        0.00042957797292136652113,
        -0.0018016407040474909153,
        0.00035371379997452024845,
    ),
    16: (
        0.054415842243104009955,
        0.31287159091429997066,
        0.67563073629728980681,
        0.58535468365420671277,
        -0.015829105256349305667,
        -0.28401554296154692652,
        0.00047248457391328277036,
        0.12874742662047845886,
        -0.01736930100180754617,
        -0.044088253930794751507,
        0.013981027917398281649,
        0.0087460940474057767164,
        -0.0048703529934515743104,
        -0.0003917403733769470463,
        0.00067544940645056936637,
        -0.00011747678412476953373,
    ),
    18: (
        0.038077947363878346589,
        0.24383467461259035373,
        0.6048231236901111119,
        0.65728807805130053808,
        0.13319738582500757619,
        -0.29327378327917490881,
        -0.096840783222976460514,
        0.14854074933810638014,
        0.030725681479333379212,
        -0.067632829061329973676,
        0.00025094711483145195759,
        0.022361662123679097205,
        -0.0047232047577513972779,
        -0.0042815036824634298345,
        0.0018476468830562264766,
        0.00023038576352319596721,
        -0.00025196318894271013697,
        0.000039347320316271599481,
    ),
    20: (
        0.026670057900555553587,
        0.18817680007769148902,
        0.52720118893172558648,
        0.68845903945360356574,
        0.28117234366057746075,
        -0.24984642432731537942,
        -0.1959462743773770435,
        0.12736934033579326008,
        0.09305736460357235116,
        -0.071394147166397087145,
        -0.029457536821875812858,
        0.03321267405934100174,
        0.0036065535669561696554,
        -0.010733175483330575044,
        0.0013953517470529011658,
        0.0019924052951850561172,
        -0.00068585669495971162656,
        -0.00011646685512928545095,
        0.000093588670320069591334,
        -0.000013264202894521244812,
    ),
}

_SUPPORTED_MOMENTS = tuple(sorted(length // 2 for length in _SCALING))


def scaling_filter(vanishing_moments):
    """Return the length-2N scaling filter as a float64 array."""
    length = 2 * vanishing_moments
    if length not in _SCALING:
        raise ConfigError(
            f"unsupported vanishing moments {vanishing_moments}; "
            f"supported: {_SUPPORTED_MOMENTS}"
        )
    return np.asarray(_SCALING[length], dtype=np.float64)


def wavelet_filter(g):
    """Quadrature-mirror detail filter for a scaling filter g."""
    g = np.asarray(g, dtype=np.float64)
    signs = np.where(np.arange(g.size) % 2 == 0, 1.0, -1.0)
    return signs * g[::-1]


def check_orthonormality(g, tol=1e-12):
    """Verify unit energy, sum sqrt(2), and even-shift orthogonality."""
    g = np.asarray(g, dtype=np.float64)
    if abs(float(np.sum(g * g)) - 1.0) > tol:
        raise ConfigError("scaling filter fails unit-energy check")
    if abs(float(np.sum(g)) - math.sqrt(2.0)) > tol:
        raise ConfigError("scaling filter fails sum == sqrt(2) check")
    for m in range(1, g.size // 2):
        if abs(float(np.dot(g[: g.size - 2 * m], g[2 * m :]))) > tol:
            raise ConfigError(f"scaling filter fails shift-{m} orthogonality")


for _g in _SCALING.values():
    check_orthonormality(np.asarray(_g))

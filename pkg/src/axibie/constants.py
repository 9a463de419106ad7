r"""Normalization conventions, kept in one place.

All azimuthal transforms use the symmetric convention

    f_n = \int_T e^{-in\theta} f(\theta) d\theta / sqrt(2 pi)
    f(\theta) = \sum_n e^{in\theta} f_n / sqrt(2 pi)

so that the modal operator acting on mode n is

    [K_n s](r, z) = sqrt(2 pi) \int_gamma k_n(r, z, r', z') s(r', z') r' dl.

=====================================  ============================  ==========
quantity                               factor                        name
=====================================  ============================  ==========
transform prefactor                    1/sqrt(2 pi)                  INV_SQRT_2PI
modal operator prefactor               sqrt(2 pi)                    SQRT_2PI
trapezoid rule on M samples            2 pi / M                      (per call)
Laplace Green's function               1/(4 pi |x - x'|)             INV_4PI
modal Laplace kernels, integral form   1/sqrt(32 pi^3) = 1/(4pi sqrt(2pi))  INV_SQRT_32PI3
modal single layer, Legendre form      Q_{n-1/2}(chi)/sqrt(8 pi^3 r r')    SQRT_8PI3
discrete convolution of two modal      (1/sqrt(2 pi)) sum_k a_k b_{n-k}    INV_SQRT_2PI
  sequences (product of functions)
on-axis monopole (r0 = 0), n = 0 only  sqrt(2 pi)/(4 pi R0)          (derived)
=====================================  ============================  ==========

``NORMALIZATION_VERSION`` is printed in every CSV header so tables produced
under a different convention cannot be mixed silently.
"""

import math

NORMALIZATION_VERSION = "sym-sqrt2pi-v1"

PI = math.pi
TWO_PI = 2.0 * math.pi
SQRT_2PI = math.sqrt(2.0 * math.pi)
INV_SQRT_2PI = 1.0 / SQRT_2PI
INV_4PI = 1.0 / (4.0 * math.pi)
INV_SQRT_32PI3 = 1.0 / math.sqrt(32.0 * math.pi**3)
SQRT_8PI3 = math.sqrt(8.0 * math.pi**3)

NODES_PER_PANEL = 10

"""
Linear decay of zero-mass data
==============================

For data with zero mass in ``x`` the linear flow decays like ``t^(-7/4)``
instead of the kernel rate ``t^(-5/4)``, and the leading profile is the
first moment times ``d_x K``.  The whole-plane evaluator avoids periodic
images, which matter here because the kernel is constant along the
parabola ``x + y^2/(4t) = const``.
"""

import numpy as np

from kpburgers.asymptotics import fit_decay_rate, verify_linear_expansion
from kpburgers.checks import dipole_source, linear_decay_table

u0 = dipole_source()          # 0.1 x exp(-x^2 - y^2) on a 16 x 16 box
g = u0.grid
print(f"first moment int(-x) u0 = {-np.sum(g.x[:, None] * u0.physical) * g.dx * g.dy:.10f}")

############################################################
# Sup norm of S(t) * u0 and its fitted exponent

rows = linear_decay_table(u0)
for t, v in rows:
    print(f"t = {t:6.1f}   ||S(t)*u0||_inf = {v:.6e}   t^1.75 * sup = {t**1.75 * v:.6f}")
t = np.array([r[0] for r in rows])
slope, err = fit_decay_rate((t, np.array([r[1] for r in rows])), (4, 256))
print(f"fitted slope {slope:.4f} +- {err:.4f}")

############################################################
# Distance to the first-order profile, scaled by t^(7/4)

table = verify_linear_expansion(u0, [8, 16, 32, 64], l_max=0, m_max=0)
for row in table.combination:
    print(f"t = {row.t:5.1f}   t^1.75 ||S*u0 - dxK*M1||_inf = {row.scaled_error:.6f}")

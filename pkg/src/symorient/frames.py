"""Rotation-equivariant reference frames built from point moments.

``moment_frame(R @ X)`` equals ``R @ moment_frame(X)`` up to a change of
columns that is itself an octahedral flip (or a symmetry of the cloud), so
expressing a cloud in its own frame removes almost all of an arbitrary
rotation before any learning happens. What remains is exactly the flip
ambiguity the quotient loss is built to ignore.

Construction:

1. The *axis* is the principal axis whose variance is farthest from the mean
   variance. When the second moments are nearly isotropic (cube-like
   shapes) the axis instead maximises the squared deviation of the fourth
   moment ``mean((p . u)^4)`` from its spherical average.
2. In the plane orthogonal to the axis, the angle of
   ``m4 / s4 + 4 m2^2 / s2^2`` (with ``m_k`` the mean of ``(s + i t)^k``
   over in-plane coordinates) fixes four candidate directions 90 degrees
   apart; the one with larger variance and positive third moment wins.
3. Axis and in-plane direction are signed by their third moments.
"""

import numpy as np

#: Relative second-moment anisotropy below which a cloud counts as isotropic.
ISOTROPY_THRESHOLD = 0.065
#: Weight of the squared second-moment term in the in-plane angle.
PLANE_M2_WEIGHT = 4.0


def _hemisphere_grid(n):
    i = np.arange(n) + 0.5
    z = i / n
    phi = np.pi * (1.0 + 5.0 ** 0.5) * i
    r = np.sqrt(1.0 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


_GRID = _hemisphere_grid(256)


def _fourth_moment_axis(x, s4, iters=20):
    """Direction maximising ``(mean((p.u)^4) - s4 / 5)^2`` over the sphere."""
    base = s4 / 5.0
    # mean((p.u)^4) = q M q with q = u (x) u and M the 9x9 fourth-moment matrix,
    # so after one pass over the points every evaluation costs O(81)
    xx = (x[:, :, None] * x[:, None, :]).reshape(len(x), 9)
    m4 = xx.T @ xx / len(x)

    def quartic(u):
        q = (u[:, :, None] * u[:, None, :]).reshape(len(u), 9)
        return np.einsum("gi,ij,gj->g", q, m4, q)

    def score(u):
        return (quartic(u) - base) ** 2

    vals = score(_GRID)
    u = _GRID[int(np.argmax(vals))]
    best = float(vals.max())
    step = 0.5
    for _ in range(iters):
        cubic = m4.reshape(3, 3, 9) @ np.outer(u, u).ravel() @ u
        dev = cubic @ u - base
        g = 8.0 * dev * cubic
        g -= (g @ u) * u
        norm = np.linalg.norm(g)
        if norm == 0.0:
            break
        g /= norm
        while step > 1e-9:
            cand = u + step * g
            cand /= np.linalg.norm(cand)
            val = float(score(cand[None])[0])
            if val > best:
                u, best = cand, val
                step *= 1.5
                break
            step *= 0.5
        else:
            break
    return u


def _signed(x, u):
    return -u if ((x @ u) ** 3).mean() < 0 else u


def moment_frame(cloud):
    """Proper rotation whose columns are (in-plane direction, axis, their cross).

    Parameters
    ----------
    cloud : ndarray of shape (N, 3)

    Returns
    -------
    ndarray of shape (3, 3)
    """
    x = cloud - cloud.mean(axis=0)
    n = len(x)
    cov = x.T @ x / n
    r2 = np.einsum("ij,ij->i", x, x)
    s2 = r2.mean()
    s4 = (r2 * r2).mean()
    if s2 == 0.0:
        return np.eye(3)
    w, v = np.linalg.eigh(cov)
    dev = np.abs(w - w.mean())
    if dev.max() / w.sum() < ISOTROPY_THRESHOLD:
        axis = _fourth_moment_axis(x, s4)
    else:
        axis = v[:, int(np.argmax(dev))]
    axis = _signed(x, axis)

    helper = np.eye(3)[int(np.argmin(np.abs(axis)))]
    b1 = np.cross(axis, helper)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(axis, b1)
    z = x @ b1 + 1j * (x @ b2)
    m2 = (z ** 2).mean()
    m4 = (z ** 4).mean()
    theta = np.angle(m4 / s4 + PLANE_M2_WEIGHT * m2 ** 2 / s2 ** 2) / 4.0
    angles = theta + np.arange(4) * (np.pi / 2)
    cands = np.cos(angles)[:, None] * b1 + np.sin(angles)[:, None] * b2
    var = np.einsum("ki,ij,kj->k", cands, cov, cands)
    u = cands[0] if var[0] >= var[1] else cands[1]
    u = _signed(x, u)
    return np.stack([u, axis, np.cross(u, axis)], axis=1)


def moment_frames(clouds):
    """:func:`moment_frame` for each cloud of a ``(B, N, 3)`` batch."""
    return np.stack([moment_frame(c) for c in clouds])

"""Independent closed forms and small field builders shared by the tests."""

import numpy as np

from nsinflation.spectral import Box, SpectralField, sum_fields


def gaussian_field(a=1.0, n=4, d=2, weights=(1.0,), cutoff=1e-20):
    """Periodised Gaussian ``exp(-|x|^2 / (4a))`` times constant component ``weights``."""
    m = int(np.ceil(n * np.sqrt(-np.log(cutoff) / a)))
    ks = np.arange(-m, m + 1)
    grids = np.meshgrid(*([ks] * d), indexing="ij")
    xi2 = sum((g / n) ** 2 for g in grids)
    vol = (2 * np.pi * n) ** d
    c = (4 * np.pi * a) ** (d / 2) * np.exp(-a * xi2) / vol
    coef = np.stack([w * c for w in weights]).astype(complex)
    return SpectralField(Box((0,) * d, (n,) * d), [((-m,) * d, coef)], len(weights))


def gaussian_heat_closed_form(points, a, t, nu, d):
    """Heat flow of ``exp(-|x|^2/(4a))``: ``(a/(a+nu t))^{d/2} exp(-|x|^2 / (4(a+nu t)))``."""
    r2 = np.sum(np.asarray(points) ** 2, axis=1)
    s = a + nu * t
    return (a / s) ** (d / 2) * np.exp(-r2 / (4 * s))


def random_band_field(rng, n=2, K=2, ncomp=1, d=2):
    """Real random field with lattice frequencies ``|m_l| <= K n`` on a box of periods ``n``."""
    size = (ncomp,) + (2 * K * n + 1,) * d
    c = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    flip = (slice(None),) + (slice(None, None, -1),) * d
    c = 0.5 * (c + np.conj(c[flip]))
    return SpectralField(Box((0,) * d, (n,) * d), [((-K * n,) * d, c)], ncomp)


def helmholtz_heat(u, t, mu, lam):
    """Lame flow by explicit projection onto gradient and divergence-free parts."""
    out = []
    for o, c in u.coalesced().windows:
        xi = [np.broadcast_to(x, c.shape[1:]) for x in u.freqs(o, c.shape[1:])]
        k2 = sum(x * x for x in xi)
        safe = np.where(k2 == 0, 1.0, k2)
        dot = sum(x * c[i] for i, x in enumerate(xi))
        par = np.stack([x * dot / safe for x in xi])
        perp = c - par
        out.append((o, np.exp(-(2 * mu + lam) * t * k2) * par + np.exp(-mu * t * k2) * perp))
    return SpectralField(u.box, out, u.ncomp)


def dense(f, n=48):
    """Samples of a spectral field on an ``n^d`` grid."""
    return f.sample((n,) * f.d)


def difference(f, g):
    return sum_fields([f, g.scaled(-1.0)])


def rel_l2(f, g):
    """Relative L^2 distance ``||f - g|| / ||g||`` (Parseval)."""
    return float(np.sqrt(np.sum(difference(f, g).l2_squared()) / np.sum(g.l2_squared())))

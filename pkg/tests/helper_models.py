"""Constructed potentials used to check that the validators have teeth."""

import numpy as np

from fk_saddle import PluginPotential
from fk_saddle.model import ClassicalFKPotential


class FlippedBondPotential(ClassicalFKPotential):
    """Classical FK with the sign of one bond's coupling flipped.

    Violates the ferromagnetic sign condition on that bond; the comparison
    principle should fail under this model.
    """

    def __init__(self, n=2):
        super().__init__(n=n)
        self.flip = self.neighbor_indices[0]

    def energy(self, cfg):
        cfg = np.asarray(cfg, dtype=float)
        base = super().energy(cfg)
        c0 = cfg[..., self.origin]
        d = cfg[..., self.flip] - c0
        return base - 2.0 * self.coupling * d ** 2

    def gradient(self, cfg):
        cfg = np.asarray(cfg, dtype=float)
        out = super().gradient(cfg)
        c0 = cfg[..., self.origin]
        d = cfg[..., self.flip] - c0
        out[..., self.flip] -= 4.0 * self.coupling * d
        out[..., self.origin] += 4.0 * self.coupling * d
        return out

    def hessian(self, cfg):
        cfg = np.asarray(cfg, dtype=float)
        out = super().hessian(cfg)
        f, o = self.flip, self.origin
        out[..., f, f] -= 4.0 * self.coupling
        out[..., o, o] -= 4.0 * self.coupling
        out[..., f, o] += 4.0 * self.coupling
        out[..., o, f] += 4.0 * self.coupling
        return out


class AntiferroAxisPotential(ClassicalFKPotential):
    """Classical FK with the axis-1 couplings negated on both bonds.

    One flipped bond cancels against its mirror in the lattice sum; negating
    the pair leaves a genuine antiferromagnetic axis whose flow mixes ordered
    data with the wrong sign.
    """

    def __init__(self, n=2):
        super().__init__(n=n)
        self.axis_bonds = tuple(
            i for i, b in enumerate(self.ball)
            if abs(b[0]) == 1 and all(c == 0 for c in b[1:]))

    def energy(self, cfg):
        cfg = np.asarray(cfg, dtype=float)
        out = super().energy(cfg)
        c0 = cfg[..., self.origin]
        for idx in self.axis_bonds:
            out = out - 2.0 * self.coupling * (cfg[..., idx] - c0) ** 2
        return out

    def gradient(self, cfg):
        cfg = np.asarray(cfg, dtype=float)
        out = super().gradient(cfg)
        c0 = cfg[..., self.origin]
        for idx in self.axis_bonds:
            d = cfg[..., idx] - c0
            out[..., idx] -= 4.0 * self.coupling * d
            out[..., self.origin] += 4.0 * self.coupling * d
        return out

    def hessian(self, cfg):
        cfg = np.asarray(cfg, dtype=float)
        out = super().hessian(cfg)
        o = self.origin
        for f in self.axis_bonds:
            out[..., f, f] -= 4.0 * self.coupling
            out[..., o, o] -= 4.0 * self.coupling
            out[..., f, o] += 4.0 * self.coupling
            out[..., o, f] += 4.0 * self.coupling
        return out


def flipped(n=2, **_):
    return AntiferroAxisPotential(n=n)


def onsite_only(n=2, **_):
    """sin on-site term with no coupling: (S3) strictness fails."""
    return ClassicalFKPotential(amplitude=1.0, coupling=0.0, n=n)


def shifted_classical(offset=0.37, n=2, **_):
    """Classical FK plus a constant: every energy shifts, differences do not."""
    base = ClassicalFKPotential(n=n)
    return PluginPotential(
        energy_fn=lambda cfg: base.energy(cfg) + offset,
        n=n, r=1,
        gradient_fn=base.gradient,
        hessian_fn=base.hessian,
        second_derivative_bound=base.second_derivative_bound)

"""Shared environment builders and a randomized validated-environment factory."""

from __future__ import annotations

import numpy as np
import pytest

from bibranch.densities import Density, SignedMeasure1D
from bibranch.environment import EnvSpec, JumpKernel, validate
from bibranch.measures import Dirac, ExpProduct


def const(v: float) -> SignedMeasure1D:
    return SignedMeasure1D.const(v)


def zero() -> SignedMeasure1D:
    return SignedMeasure1D.zero()


def atoms_only(*pairs) -> SignedMeasure1D:
    return SignedMeasure1D(Density.zero(), tuple(pairs))


def make_env(b11=None, b12=None, b21=None, b22=None, c1=None, c2=None,
             m1=None, m2=None, horizon=1.0) -> EnvSpec:
    return EnvSpec(
        b=((b11 or zero(), b12 or zero()), (b21 or zero(), b22 or zero())),
        c=(c1 or zero(), c2 or zero()),
        m=(m1 or JumpKernel.zero(), m2 or JumpKernel.zero()),
        horizon=horizon,
    )


def feller_env(b=1.0, c=0.5) -> EnvSpec:
    """Type-1 square-root branching with inert type 2."""
    return make_env(b11=const(b), c1=const(c))


def random_env(rng: np.random.Generator, horizon: float = 1.0) -> EnvSpec:
    """A randomized environment that always satisfies the validation rules."""
    def diag():
        sm = const(float(rng.uniform(-0.5, 1.0)))
        if rng.random() < 0.4:
            t = float(rng.uniform(0.15, 0.85)) * horizon
            sm = sm + atoms_only((t, float(rng.uniform(0.0, 0.5))))
        return sm

    def cross():
        return const(float(rng.uniform(0.0, 0.6)))

    def clock():
        return const(float(rng.uniform(0.0, 0.5))) if rng.random() < 0.5 else zero()

    def kernel(axis):
        comps, atom_list = [], []
        if rng.random() < 0.6:
            rate = Density.constant(float(rng.uniform(0.1, 1.0)))
            if rng.random() < 0.5:
                z = rng.uniform(0.05, 1.2, size=2)
                comps.append((rate, Dirac((float(z[0]), float(z[1])),
                                          float(rng.uniform(0.1, 0.6)))))
            else:
                comps.append((rate, ExpProduct(float(rng.uniform(0.8, 3.0)),
                                               float(rng.uniform(0.8, 3.0)),
                                               float(rng.uniform(0.1, 0.6)))))
        if rng.random() < 0.3:
            t = float(rng.uniform(0.1, 0.9)) * horizon
            zi = float(rng.uniform(0.1, 0.9))
            w = float(rng.uniform(0.05, 0.45)) / zi  # keeps delta below 1
            atom_list.append((t, Dirac((zi, float(rng.uniform(0.0, 0.5)))
                                       if axis == 0 else
                                       (float(rng.uniform(0.0, 0.5)), zi), w)))
        return JumpKernel(tuple(comps), tuple(atom_list))

    env = make_env(b11=diag(), b12=cross(), b21=cross(), b22=diag(),
                   c1=clock(), c2=clock(), m1=kernel(0), m2=kernel(1),
                   horizon=horizon)
    report = validate(env)
    assert report.passed, f"random env generator produced invalid env:\n{report}"
    return env


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

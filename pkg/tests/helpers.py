"""Shared task-building helpers for the test suite."""

import numpy as np

import afbrecon as ab


def build_task(size=32, coils=4, kind="uniform-cartesian", ratio=0.4,
               noise_sigma=0.01, seed=0, acs_lines=None):
    """Phantom + simulated acquisition + mask for one reconstruction task."""
    truth = ab.make_phantom(ab.PhantomSpec(size=size))
    maps = ab.make_coil_maps(size, coils)
    mask = ab.make_mask(kind, size, ratio, acs_lines=acs_lines, seed=seed)
    acq = ab.simulate_acquisition(truth, maps, mask, noise_sigma, seed)
    return truth, acq, mask


def build_model(size=32, coils=4, kind="uniform-cartesian", ratio=0.4,
                noise_sigma=0.01, seed=0):
    truth, acq, mask = build_task(size, coils, kind, ratio, noise_sigma, seed)
    return truth, ab.ForwardModel.from_coilset(acq, mask)


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

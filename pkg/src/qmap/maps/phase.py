"""Phase congruency from a frequency-domain log-Gabor bank, and its similarity map.

The construction follows Kovesi's ``phasecong2`` as used by FSIM: minimum
wavelength 6, scale multiplier 2, ``sigma_onf`` 0.55, angular spread ratio
1.2 and a noise threshold ``k = 2`` standard deviations above the Rayleigh
mean, estimated per orientation from the median smallest-scale response.
"""

from __future__ import annotations

import math

import numpy as np

from ..image import as_image, to_luminance
from ._common import check_pair, similarity
from .config import MapConfig

MIN_WAVELENGTH = 6.0
MULT = 2.0
SIGMA_ONF = 0.55
D_THETA_ON_SIGMA = 1.2
NOISE_K = 2.0
EPS = 1e-4


def _lowpass(rows: int, cols: int, cutoff: float = 0.45, order: int = 15) -> np.ndarray:
    fy = np.fft.fftfreq(rows)[:, None]
    fx = np.fft.fftfreq(cols)[None, :]
    radius = np.sqrt(fx * fx + fy * fy)
    return 1.0 / (1.0 + (radius / cutoff) ** (2 * order))


def log_gabor_bank(rows: int, cols: int, scales: int = 4, orientations: int = 4) -> np.ndarray:
    """Filters of shape ``(orientations, scales, rows, cols)``, zero frequency at [0, 0]."""
    fy = np.fft.fftfreq(rows)[:, None]
    fx = np.fft.fftfreq(cols)[None, :]
    radius = np.sqrt(fx * fx + fy * fy)
    radius[0, 0] = 1.0
    theta = np.arctan2(-fy, fx)
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    lp = _lowpass(rows, cols)

    radial = []
    for s in range(scales):
        f0 = 1.0 / (MIN_WAVELENGTH * MULT ** s)
        g = np.exp(-(np.log(radius / f0) ** 2) / (2 * math.log(SIGMA_ONF) ** 2)) * lp
        g[0, 0] = 0.0
        radial.append(g)

    theta_sigma = math.pi / orientations / D_THETA_ON_SIGMA
    bank = np.empty((orientations, scales, rows, cols))
    for o in range(orientations):
        angle = o * math.pi / orientations
        ds = sin_t * math.cos(angle) - cos_t * math.sin(angle)
        dc = cos_t * math.cos(angle) + sin_t * math.sin(angle)
        dtheta = np.abs(np.arctan2(ds, dc))
        spread = np.exp(-(dtheta ** 2) / (2 * theta_sigma ** 2))
        for s in range(scales):
            bank[o, s] = radial[s] * spread
    return bank


def phase_congruency(plane: np.ndarray, scales: int = 4, orientations: int = 4) -> np.ndarray:
    """Phase congruency of a 2-D plane, summed over orientations (values in [0, 1])."""
    plane = np.asarray(plane, dtype=np.float64)
    rows, cols = plane.shape
    bank = log_gabor_bank(rows, cols, scales, orientations)
    spectrum = np.fft.fft2(plane)
    # Spatial-domain filters, rescaled to match the power of the frequency ones.
    spatial = np.real(np.fft.ifft2(bank)) * math.sqrt(rows * cols)

    energy_all = np.zeros((rows, cols))
    amplitude_all = np.zeros((rows, cols))
    for o in range(orientations):
        eo = np.fft.ifft2(spectrum[None] * bank[o])
        even, odd = eo.real, eo.imag
        amplitude = np.abs(eo)
        sum_e = even.sum(axis=0)
        sum_o = odd.sum(axis=0)
        sum_an = amplitude.sum(axis=0)
        x_energy = np.sqrt(sum_e ** 2 + sum_o ** 2) + EPS
        mean_e = sum_e / x_energy
        mean_o = sum_o / x_energy
        energy = np.sum(even * mean_e + odd * mean_o - np.abs(even * mean_o - odd * mean_e), axis=0)

        # Noise power from the median squared response at the smallest scale.
        em_n = np.sum(bank[o, 0] ** 2)
        median_e2n = np.median(amplitude[0] ** 2)
        noise_power = (-median_e2n / math.log(0.5)) / em_n
        sum_an2 = np.sum(spatial[o] ** 2)
        sum_ai_aj = 0.0
        for i in range(scales - 1):
            sum_ai_aj += np.sum(spatial[o, i] * spatial[o, i + 1:])
        noise_energy2 = 2 * noise_power * sum_an2 + 4 * noise_power * sum_ai_aj
        tau = math.sqrt(max(noise_energy2, 0.0) / 2)
        threshold = tau * math.sqrt(math.pi / 2) + NOISE_K * math.sqrt((2 - math.pi / 2) * tau ** 2)
        threshold /= 1.7

        energy_all += np.maximum(energy - threshold, 0.0)
        amplitude_all += sum_an
    return energy_all / (amplitude_all + EPS)


def fsim_pc_map(dist, ref, cfg: MapConfig | None = None) -> np.ndarray:
    """Phase-congruency similarity of the two luminance planes."""
    cfg = cfg or MapConfig()
    dist, ref = check_pair(as_image(dist), as_image(ref))
    pc1 = phase_congruency(to_luminance(dist) * cfg.dynamic_range, cfg.pc_scales, cfg.pc_orientations)
    pc2 = phase_congruency(to_luminance(ref) * cfg.dynamic_range, cfg.pc_scales, cfg.pc_orientations)
    return np.clip(similarity(pc1, pc2, cfg.pc_t1), 0.0, 1.0)

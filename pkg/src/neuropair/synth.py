"""Synthetic coupled datasets with a planted source-to-channel correspondence.

Latent sources are mixtures of sinusoids at source-disjoint integer
frequencies, so columns are smooth (DTW and lag behave meaningfully), exactly
zero-mean, and mutually orthogonal over the sampled window. Brain signals mix
every source into every voxel; each planted filter channel carries exactly
one source plus noise, remaining channels are pure noise. Everything the
pipeline sees is z-normalized, indistinguishable from ingested data.
"""

import math
from dataclasses import dataclass

import numpy as np

from .embedding import SubjectDataset, znormalize
from .errors import InputError
from .matching import pearson

_WAVES_PER_SOURCE = 3


@dataclass(eq=False)
class SynthConfig:
    subjects: int
    t: int
    n_voxels: int
    m_sources: int
    c_channels: int
    sigma_brain: float = 0.5
    sigma_filter: float = 0.5
    seed: int = 42
    permutation: np.ndarray | None = None  # source -> channel; drawn when None

    def __post_init__(self):
        if self.subjects < 1:
            raise InputError("need at least one subject")
        if self.m_sources > min(self.n_voxels, self.c_channels):
            raise InputError(
                f"sources ({self.m_sources}) must not exceed voxels "
                f"({self.n_voxels}) or channels ({self.c_channels})"
            )
        if self.sigma_brain < 0 or self.sigma_filter < 0:
            raise InputError("noise levels must be non-negative")
        if self.m_sources * _WAVES_PER_SOURCE >= self.t // 2:
            raise InputError(
                f"t={self.t} too short for {self.m_sources} band-limited sources"
            )
        if self.permutation is not None:
            perm = np.asarray(self.permutation)
            if perm.shape != (self.m_sources,) or len(set(perm.tolist())) != self.m_sources:
                raise InputError("permutation must be injective, one channel per source")
            if perm.min() < 0 or perm.max() >= self.c_channels:
                raise InputError("permutation entries out of channel range")


@dataclass(eq=False)
class SynthDataset:
    subjects: list[SubjectDataset]
    filter_acts: np.ndarray   # (t, c), z-normalized
    permutation: np.ndarray   # (m,) source -> channel
    sources: np.ndarray       # (t, m), unit variance
    config: SynthConfig


def _draw_sources(cfg, rng):
    # Disjoint integer frequency sets per source keep the columns exactly
    # orthogonal over the window; amplitudes/phases randomize the waveform.
    pool_hi = min(cfg.t // 2, cfg.m_sources * _WAVES_PER_SOURCE + 8)
    freqs = rng.choice(
        np.arange(1, pool_hi), size=cfg.m_sources * _WAVES_PER_SOURCE, replace=False
    ).reshape(cfg.m_sources, _WAVES_PER_SOURCE)
    amps = rng.uniform(0.5, 1.5, freqs.shape)
    phases = rng.uniform(0.0, 2.0 * math.pi, freqs.shape)
    grid = np.arange(cfg.t)[:, None]
    z = np.empty((cfg.t, cfg.m_sources))
    for i in range(cfg.m_sources):
        waves = np.sin(2.0 * math.pi * freqs[i][None, :] * grid / cfg.t + phases[i])
        z[:, i] = waves @ amps[i]
    z -= z.mean(axis=0)
    z /= np.sqrt((z * z).mean(axis=0))
    return z


def generate(config):
    """Draw a full coupled dataset; bit-reproducible from (config, seed)."""
    rng = np.random.default_rng(config.seed)
    z = _draw_sources(config, rng)
    mixing = rng.standard_normal((config.n_voxels, config.m_sources))
    if config.permutation is not None:
        perm = np.asarray(config.permutation, dtype=np.intp).copy()
    else:
        perm = rng.choice(config.c_channels, size=config.m_sources, replace=False)

    n_train = max(1, round(0.6 * config.subjects))
    n_val = round(0.1 * config.subjects)
    splits = ["train"] * n_train + ["val"] * n_val
    splits += ["test"] * (config.subjects - len(splits))
    splits = splits[: config.subjects]

    subjects = []
    for s in range(config.subjects):
        raw = z @ mixing.T
        if config.sigma_brain > 0:
            raw = raw + config.sigma_brain * rng.standard_normal(raw.shape)
        signal, _ = znormalize(raw)
        subjects.append(
            SubjectDataset(subject_id=f"s{s:03d}", signal=signal, split=splits[s])
        )

    acts = rng.standard_normal((config.t, config.c_channels))
    for i in range(config.m_sources):
        noise = config.sigma_filter * rng.standard_normal(config.t)
        acts[:, perm[i]] = z[:, i] + noise
    acts, _ = znormalize(acts)
    return SynthDataset(
        subjects=subjects,
        filter_acts=acts,
        permutation=perm,
        sources=z,
        config=config,
    )


def score_recovery(pairing, fbn_activations, dataset):
    """Fraction of planted correspondences the pairing recovered.

    Learned networks come back permuted and sign-flipped relative to the
    latent sources, so each network is first matched to the source with
    maximal |PCC|; a negative match flips that network's series before its
    channel choice is read off. The flip is a scoring device only; a network
    scores correct when its (flip-resolved) chosen filter is the channel
    planted for its matched source.
    """
    if pairing.direction != "fbn_to_filter":
        raise InputError("recovery scoring expects a network-to-filter pairing")
    l = np.asarray(fbn_activations, dtype=np.float64)
    z = dataset.sources
    acts = dataset.filter_acts
    if l.shape[0] != z.shape[0]:
        raise InputError(f"series lengths disagree: {l.shape[0]} vs {z.shape[0]}")
    if pairing.n_source != l.shape[1]:
        raise InputError(
            f"pairing covers {pairing.n_source} networks, activations have {l.shape[1]}"
        )
    m = l.shape[1]
    correct = 0
    for k in range(m):
        cors = np.array([pearson(z[:, i], l[:, k]) for i in range(z.shape[1])])
        cors = np.where(np.isnan(cors), 0.0, cors)
        i = int(np.argmax(np.abs(cors)))
        if cors[i] >= 0:
            chosen = pairing.pairs[k].target
        else:
            flipped = [pearson(-l[:, k], acts[:, c]) for c in range(acts.shape[1])]
            flipped = np.where(np.isnan(flipped), -np.inf, flipped)
            chosen = int(np.argmax(flipped))
        if chosen == int(dataset.permutation[i]):
            correct += 1
    return correct / m

"""Rician fading channels between the BS, the STAR-RIS and the users."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np

from app.config import ChannelConfig
from app.errors import InvalidArgumentError
from app.numerics.checkpoint import array_from_document, array_to_document, load_document, save_document
from app.numerics.linalg import as_complex_matrix

LOGGER = logging.getLogger("starris.channel")

TRANSMIT = "T"
REFLECT = "R"


@dataclass(frozen=True)
class ChannelRealization:
    """G is N x M (RIS <-> BS); h holds one length-N RIS <-> user channel per row."""

    G: np.ndarray
    h: np.ndarray
    distances: np.ndarray
    users_t: int
    users_r: int

    @property
    def antennas(self) -> int:
        return self.G.shape[1]

    @property
    def elements(self) -> int:
        return self.G.shape[0]

    @property
    def num_users(self) -> int:
        return self.h.shape[0]

    def user_channel(self, user: int) -> np.ndarray:
        return self.h[user].reshape(-1, 1)

    def zone_of(self, user: int) -> str:
        return zone_of(user, self.users_t)

    def validate(self) -> "ChannelRealization":
        if self.h.ndim != 2 or self.h.shape[1] != self.elements:
            raise InvalidArgumentError(f"user channels must be (users, {self.elements}), got {self.h.shape}")
        if self.users_t + self.users_r != self.num_users:
            raise InvalidArgumentError("zone user counts do not match the number of user channels")
        if not (np.all(np.isfinite(self.G)) and np.all(np.isfinite(self.h))):
            raise InvalidArgumentError("channel realization has non-finite entries")
        return self


def zone_of(user: int, users_t: int) -> str:
    """Users ``0..A-1`` sit behind the surface (transmission), the rest in front."""
    return TRANSMIT if user < users_t else REFLECT


def path_loss_amplitude(distance: float, exponent: float, reference: float) -> float:
    if distance <= 0:
        raise InvalidArgumentError(f"distance must be > 0, got {distance}")
    return float(np.sqrt(reference / distance**exponent))


def sample_channels(cfg: ChannelConfig, rng: np.random.Generator) -> ChannelRealization:
    cfg.validate()
    n, m, users = cfg.elements, cfg.antennas, cfg.num_users
    distances = rng.uniform(cfg.user_distance_min, cfg.user_distance_max, size=users)
    g_amplitude = path_loss_amplitude(cfg.bs_ris_distance, cfg.exponent_bs_ris, cfg.reference_path_loss)
    G = g_amplitude * _rician(np.ones((n, m)), cfg.rician_bs_ris, rng)
    h = np.empty((users, n), dtype=np.complex128)
    for user in range(users):
        amplitude = path_loss_amplitude(distances[user], cfg.exponent_ris_user, cfg.reference_path_loss)
        h[user] = amplitude * _rician(np.ones(n), cfg.rician_ris_user, rng)
    LOGGER.debug("Sampled channels: N=%d M=%d users=%d distances=%s", n, m, users, np.round(distances, 3))
    return ChannelRealization(G=G, h=h, distances=distances, users_t=cfg.users_t, users_r=cfg.users_r)


def cascade(h: np.ndarray, phi: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Effective 1 x M channel h^H Phi G."""
    h = as_complex_matrix(h, "user channel")
    phi = as_complex_matrix(phi, "coefficient matrix")
    G = as_complex_matrix(G, "BS channel")
    if h.shape[1] != 1 or h.shape[0] != phi.shape[0] or phi.shape[0] != phi.shape[1] or phi.shape[1] != G.shape[0]:
        raise InvalidArgumentError(f"cannot cascade h{h.shape}, Phi{phi.shape}, G{G.shape}")
    return np.conj(h).T @ phi @ G


def channels_to_document(realization: ChannelRealization) -> Dict[str, Any]:
    return {
        "users_t": realization.users_t,
        "users_r": realization.users_r,
        "G": array_to_document(realization.G),
        "h": array_to_document(realization.h),
        "distances": array_to_document(realization.distances),
    }


def channels_from_document(document: Dict[str, Any]) -> ChannelRealization:
    try:
        realization = ChannelRealization(
            G=array_from_document(document["G"]).astype(np.complex128),
            h=array_from_document(document["h"]).astype(np.complex128),
            distances=array_from_document(document["distances"]),
            users_t=int(document["users_t"]),
            users_r=int(document["users_r"]),
        )
    except KeyError as exc:
        raise InvalidArgumentError(f"channel document is missing {exc}") from exc
    return realization.validate()


def dump_channels(path: Path | str, realization: ChannelRealization) -> Path:
    return save_document(path, {"kind": "channel", **channels_to_document(realization)})


def load_channels(path: Path | str) -> ChannelRealization:
    document = load_document(path)
    if document.get("kind") != "channel":
        raise InvalidArgumentError(f"{path} does not hold a channel realization")
    return channels_from_document(document)


def _rician(line_of_sight: np.ndarray, factor: float, rng: np.random.Generator) -> np.ndarray:
    scattered = (rng.standard_normal(line_of_sight.shape) + 1j * rng.standard_normal(line_of_sight.shape)) / np.sqrt(2.0)
    los_weight, nlos_weight = _rician_weights(factor)
    return los_weight * line_of_sight + nlos_weight * scattered


def _rician_weights(factor: float) -> Tuple[float, float]:
    return float(np.sqrt(factor / (1.0 + factor))), float(np.sqrt(1.0 / (1.0 + factor)))

"""Scenario ingestion and the radio model.

Holds the immutable problem instance (geometry, radio parameters, mission)
and computes every derived link quantity the planners consume: channel gains
for the air and terrestrial links, per-cell signal and interference sums,
and the spectral rates of the UAV and of the ground users.

Internal units are SI throughout (m, s, W, Hz, bits). Scenario documents use
field-level units (dBm, dB, GHz, Mbits) and are converted once at the
boundary.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    BadUnits,
    DegenerateLink,
    InvariantViolation,
    MissingField,
    QosUnsatisfiable,
)


def dbm_to_watts(x_dbm: float) -> float:
    """Convert a dBm power level to watts."""
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def db_to_linear(x_db: float) -> float:
    """Convert a dB ratio to a linear ratio."""
    return 10.0 ** (x_db / 10.0)


def reference_gain(carrier_freq_ghz: float) -> float:
    """Channel power gain of the air link at 1 m reference distance.

    Chosen so that the inverse-power-law gain reproduces the urban-macro
    aerial pathloss 28 + 20*lg(f) + 22*lg(d) dB with exponent 2.2.
    """
    return 10.0 ** (-(28.0 + 20.0 * math.log10(carrier_freq_ghz)) / 10.0)


def air_pathloss_db(carrier_freq_ghz: float, dist_3d_m: float) -> float:
    """Urban-macro aerial pathloss (dB) at 3D distance ``dist_3d_m``."""
    return 28.0 + 20.0 * math.log10(carrier_freq_ghz) + 22.0 * math.log10(dist_3d_m)


def ground_pathloss_db(carrier_freq_ghz: float, dist_3d_m: float) -> float:
    """Urban-macro terrestrial pathloss (dB) at 3D distance ``dist_3d_m``."""
    return 32.4 + 20.0 * math.log10(carrier_freq_ghz) + 30.0 * math.log10(dist_3d_m)


class Scheme(enum.Enum):
    NOMA = "noma"
    MULTI_SIC = "multi_sic"
    HOVER_ONLY = "hover_only"
    OMA = "oma"


@dataclass(frozen=True)
class RadioParams:
    carrier_freq_ghz: float = 2.0
    bandwidth_hz: float = 1.0e6
    noise_dbm_per_hz: float = -174.0
    uav_tx_power_dbm: float = 23.0
    gue_tx_power_dbm: float = 23.0
    mainlobe_gain_db: float = 10.0
    sidelobe_gain_db: float = 0.5
    pathloss_exponent_air: float = 2.2
    shadow_fading_db: float = 6.0
    rayleigh_mean: float = 1.0
    downtilt_deg: float = 20.0
    beamwidth_deg: float = 30.0


@dataclass(frozen=True)
class GroundUser:
    position: np.ndarray  # horizontal (x, y) in m
    height_m: float = 1.5
    qos_bits_per_s_per_hz: float = 0.0


@dataclass(frozen=True)
class BaseStation:
    id: int
    position: np.ndarray  # horizontal (x, y) in m
    height_m: float = 25.0
    served_user: GroundUser | None = None


@dataclass(frozen=True)
class UavConfig:
    height_m: float
    max_speed_m_s: float
    start: np.ndarray
    goal: np.ndarray


@dataclass(frozen=True)
class MissionSpec:
    required_bits: np.ndarray  # per GBS, in bits
    scheme: Scheme = Scheme.NOMA


@dataclass(frozen=True)
class Scenario:
    radio: RadioParams
    uav: UavConfig
    mission: MissionSpec
    base_stations: tuple[BaseStation, ...]
    rng_seed: int = 0

    @property
    def n_gbs(self) -> int:
        return len(self.base_stations)

    def gbs_positions(self) -> np.ndarray:
        return np.array([b.position for b in self.base_stations], dtype=float)


@dataclass(frozen=True)
class LinkConstants:
    """Derived per-scenario radio constants.

    ``signal_watts[m]`` is the served user's received power at its own cell,
    ``intercell_plus_noise_watts[m]`` sums all cross-cell user powers plus
    thermal noise over the band, and ``eta[m]`` is the UAV link budget ratio
    whose division by the 3D-distance power law gives the UAV SINR.
    """

    signal_watts: np.ndarray
    intercell_plus_noise_watts: np.ndarray
    eta: np.ndarray
    beta0: float
    height_diff_m: float  # UAV height above the GBS antennas
    alpha: float
    bandwidth_hz: float
    noise_watts: float
    has_gue: np.ndarray  # bool per GBS
    gbs_xy: np.ndarray  # (M, 2) horizontal GBS positions

    @property
    def n_gbs(self) -> int:
        return len(self.signal_watts)


def mainlobe_footprint(radio: RadioParams, gbs_height_m: float, gue_height_m: float) -> tuple[float, float]:
    """Horizontal-distance annulus [r_in, r_out] covered by the mainlobe.

    A ground point is in the mainlobe when its depression angle from the GBS
    antenna falls within downtilt +- beamwidth/2.
    """
    drop = gbs_height_m - gue_height_m
    if drop <= 0:
        raise InvariantViolation("gue_below_gbs: served user must sit below the GBS antenna")
    hi = math.radians(radio.downtilt_deg + radio.beamwidth_deg / 2.0)
    lo = math.radians(radio.downtilt_deg - radio.beamwidth_deg / 2.0)
    r_in = drop / math.tan(hi)
    r_out = drop / math.tan(lo) if lo > 1e-12 else 20.0 * drop / math.tan(hi)
    return r_in, r_out


def in_mainlobe(radio: RadioParams, gbs: BaseStation, point_xy: np.ndarray, point_height_m: float) -> bool:
    """Elevation-window test for the GBS antenna pattern at a ground point."""
    drop = gbs.height_m - point_height_m
    horiz = float(np.linalg.norm(np.asarray(point_xy, dtype=float) - gbs.position))
    depression = math.degrees(math.atan2(drop, horiz))
    half = radio.beamwidth_deg / 2.0
    return (radio.downtilt_deg - half) <= depression <= (radio.downtilt_deg + half)


def uav_channel_gain(scn: Scenario, q: np.ndarray, m: int) -> float:
    """Air-link channel power gain between the UAV at ``q`` and GBS ``m``."""
    radio = scn.radio
    gbs = scn.base_stations[m]
    h = scn.uav.height_m - gbs.height_m
    d_sq = h * h + float(np.sum((np.asarray(q, dtype=float) - gbs.position) ** 2))
    rho0 = reference_gain(radio.carrier_freq_ghz)
    return rho0 * db_to_linear(radio.sidelobe_gain_db) / d_sq ** (radio.pathloss_exponent_air / 2.0)


def _terrestrial_gain(radio: RadioParams, rx_gbs: BaseStation, gue: GroundUser) -> float:
    drop = rx_gbs.height_m - gue.height_m
    d3d = math.sqrt(drop * drop + float(np.sum((gue.position - rx_gbs.position) ** 2)))
    pl = ground_pathloss_db(radio.carrier_freq_ghz, d3d)
    if in_mainlobe(radio, rx_gbs, gue.position, gue.height_m):
        gain_db = radio.mainlobe_gain_db
    else:
        gain_db = radio.sidelobe_gain_db
    return radio.rayleigh_mean * db_to_linear(gain_db) * 10.0 ** (-(pl + radio.shadow_fading_db) / 10.0)


def gue_channel_gain(scn: Scenario, j: int, m: int) -> float:
    """Terrestrial channel power gain between GBS ``j``'s user and GBS ``m``.

    Large-scale only: pathloss plus a deterministic shadow-fading margin,
    scaled by the mean small-scale power and the antenna gain. The mainlobe
    gain applies when the user falls inside GBS ``m``'s elevation window,
    the sidelobe gain otherwise.
    """
    gue = scn.base_stations[j].served_user
    if gue is None:
        raise DegenerateLink(f"GBS {j} serves no user")
    return _terrestrial_gain(scn.radio, scn.base_stations[m], gue)


def protected_radius_sq(
    beta0: float, height_diff_m: float, alpha: float, signal_w: float, inter_w: float, theta: float
) -> float:
    """Squared protected radius keeping a user at rate target ``theta``.

    Clamped to zero when any UAV distance satisfies the target; raises when
    the target fails even with no UAV interference at all.
    """
    if theta <= 0.0:
        return 0.0
    growth = 2.0**theta - 1.0
    margin = signal_w / growth - inter_w
    if margin <= 0.0:
        raise QosUnsatisfiable("rate target fails even without the UAV")
    raw = (beta0 / margin) ** (2.0 / alpha) - height_diff_m**2
    return max(raw, 0.0)


def derive_link_constants(scn: Scenario) -> LinkConstants:
    """Compute signal/interference sums and the UAV link budget per GBS."""
    radio = scn.radio
    m_count = scn.n_gbs
    p_ue = dbm_to_watts(radio.gue_tx_power_dbm)
    p_uav = dbm_to_watts(radio.uav_tx_power_dbm)
    noise_w = dbm_to_watts(radio.noise_dbm_per_hz) * radio.bandwidth_hz

    signal = np.zeros(m_count)
    has_gue = np.zeros(m_count, dtype=bool)
    inter = np.full(m_count, noise_w)
    for m in range(m_count):
        if scn.base_stations[m].served_user is not None:
            has_gue[m] = True
            signal[m] = gue_channel_gain(scn, m, m) * p_ue
    for m in range(m_count):
        for j in range(m_count):
            if j != m and has_gue[j]:
                inter[m] += gue_channel_gain(scn, j, m) * p_ue

    for m in range(m_count):
        if has_gue[m] and signal[m] == 0.0 and scn.mission.required_bits[m] > 0:
            raise DegenerateLink(f"GBS {m} has a served user with zero received power")

    rho0 = reference_gain(radio.carrier_freq_ghz)
    beta0 = rho0 * db_to_linear(radio.sidelobe_gain_db) * p_uav
    heights = {b.height_m for b in scn.base_stations}
    if len(heights) > 1:
        raise InvariantViolation("uniform_gbs_height: all GBS heights must match")
    h = scn.uav.height_m - scn.base_stations[0].height_m

    return LinkConstants(
        signal_watts=signal,
        intercell_plus_noise_watts=inter,
        eta=beta0 / (signal + inter),
        beta0=beta0,
        height_diff_m=h,
        alpha=radio.pathloss_exponent_air,
        bandwidth_hz=radio.bandwidth_hz,
        noise_watts=noise_w,
        has_gue=has_gue,
        gbs_xy=scn.gbs_positions(),
    )


def uav_rate(consts: LinkConstants, q: np.ndarray, m: int) -> float:
    """Spectral rate (bit/s/Hz) of the UAV link to GBS ``m`` from point ``q``."""
    d_sq = float(np.sum((np.asarray(q, dtype=float) - consts.gbs_xy[m]) ** 2))
    return uav_rate_from_dist_sq(consts, d_sq, m)


def uav_rate_from_dist_sq(consts: LinkConstants, dist_sq, m: int):
    """Same as :func:`uav_rate` but on (possibly vectorized) squared distance."""
    denom = (np.asarray(dist_sq) + consts.height_diff_m**2) ** (consts.alpha / 2.0)
    return np.log2(1.0 + consts.eta[m] / denom)


def gue_rate(consts: LinkConstants, q: np.ndarray | None, m: int, uav_associated: bool) -> float:
    """Spectral rate (bit/s/Hz) of GBS ``m``'s served user.

    When the UAV is associated with GBS ``m`` its signal is decoded first and
    cancelled, so the user's rate does not depend on the UAV position. When it
    is not, the UAV contributes interference from point ``q`` (``None`` means
    infinitely far away).
    """
    s = consts.signal_watts[m]
    denom = consts.intercell_plus_noise_watts[m]
    if not uav_associated and q is not None:
        d_sq = float(np.sum((np.asarray(q, dtype=float) - consts.gbs_xy[m]) ** 2))
        denom = denom + consts.beta0 / (d_sq + consts.height_diff_m**2) ** (consts.alpha / 2.0)
    return math.log2(1.0 + s / denom)


# ---------------------------------------------------------------------------
# Scenario document parsing
# ---------------------------------------------------------------------------

_RADIO_FIELDS = (
    "carrier_freq_ghz",
    "bandwidth_hz",
    "noise_dbm_per_hz",
    "uav_tx_power_dbm",
    "gue_tx_power_dbm",
    "mainlobe_gain_db",
    "sidelobe_gain_db",
    "pathloss_exponent_air",
    "shadow_fading_db",
    "rayleigh_mean",
    "downtilt_deg",
    "beamwidth_deg",
)


def _num(doc: dict, key: str, where: str) -> float:
    if key not in doc:
        raise MissingField(f"{where}.{key}")
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise BadUnits(f"{where}.{key} must be a number, got {type(v).__name__}")
    v = float(v)
    if not math.isfinite(v):
        raise BadUnits(f"{where}.{key} must be finite")
    return v


def _vec2(doc: dict, key: str, where: str) -> np.ndarray:
    if key not in doc:
        raise MissingField(f"{where}.{key}")
    v = doc[key]
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise BadUnits(f"{where}.{key} must be a 2-element [x, y] list")
    arr = np.array([float(v[0]), float(v[1])])
    if not np.all(np.isfinite(arr)):
        raise BadUnits(f"{where}.{key} must be finite")
    return arr


def _parse_gue(doc: dict, where: str) -> GroundUser:
    qos = _num(doc, "qos_bits_per_s_per_hz", where)
    if qos < 0:
        raise InvariantViolation(f"qos_bits_per_s_per_hz must be >= 0 at {where}")
    height = _num(doc, "height_m", where) if "height_m" in doc else 1.5
    pos = _vec2(doc, "position", where) if "position" in doc else None
    return GroundUser(position=pos, height_m=height, qos_bits_per_s_per_hz=qos)


def scenario_from_dict(doc: dict) -> Scenario:
    """Build and validate a :class:`Scenario` from a parsed document."""
    if "radio" not in doc:
        raise MissingField("radio")
    if "uav" not in doc:
        raise MissingField("uav")
    if "mission" not in doc:
        raise MissingField("mission")
    if "base_stations" not in doc or not doc["base_stations"]:
        raise MissingField("base_stations")

    rdoc = doc["radio"]
    radio = RadioParams(**{k: _num(rdoc, k, "radio") for k in _RADIO_FIELDS if k in rdoc})
    for k in ("bandwidth_hz", "carrier_freq_ghz", "pathloss_exponent_air", "rayleigh_mean", "beamwidth_deg"):
        if getattr(radio, k) <= 0:
            raise InvariantViolation(f"radio.{k} must be > 0")

    udoc = doc["uav"]
    uav = UavConfig(
        height_m=_num(udoc, "height_m", "uav"),
        max_speed_m_s=_num(udoc, "max_speed_m_s", "uav"),
        start=_vec2(udoc, "start", "uav"),
        goal=_vec2(udoc, "goal", "uav"),
    )
    if uav.max_speed_m_s <= 0:
        raise InvariantViolation("uav.max_speed_m_s must be > 0 (max_speed)")

    stations: list[BaseStation] = []
    candidates: list[list[GroundUser]] = []
    seen_ids: set[int] = set()
    for i, bdoc in enumerate(doc["base_stations"]):
        where = f"base_stations[{i}]"
        bid = int(bdoc.get("id", i))
        if bid in seen_ids:
            raise InvariantViolation(f"duplicate GBS id {bid}")
        seen_ids.add(bid)
        height = _num(bdoc, "height_m", where) if "height_m" in bdoc else 25.0
        if height <= 0:
            raise InvariantViolation(f"{where}.height_m must be > 0")
        cands: list[GroundUser] = []
        if bdoc.get("gue") is not None:
            cands.append(_parse_gue(bdoc["gue"], f"{where}.gue"))
        for k, gdoc in enumerate(bdoc.get("gues") or []):
            cands.append(_parse_gue(gdoc, f"{where}.gues[{k}]"))
        candidates.append(cands)
        stations.append(
            BaseStation(
                id=bid,
                position=_vec2(bdoc, "position", where),
                height_m=height,
                served_user=cands[0] if len(cands) == 1 else None,
            )
        )
    m_count = len(stations)
    if uav.height_m <= max(b.height_m for b in stations):
        raise InvariantViolation("uav.height_m must exceed every GBS height")

    mdoc = doc["mission"]
    if "required_mbits" not in mdoc:
        raise MissingField("mission.required_mbits")
    req = mdoc["required_mbits"]
    if isinstance(req, (int, float)) and not isinstance(req, bool):
        bits = np.full(m_count, float(req) * 1e6)
    elif isinstance(req, list):
        if len(req) != m_count:
            raise InvariantViolation("mission.required_mbits list length must equal the GBS count")
        bits = np.array([float(v) for v in req]) * 1e6
    else:
        raise BadUnits("mission.required_mbits must be a number or a list")
    if np.any(bits < 0) or not np.all(np.isfinite(bits)):
        raise InvariantViolation("mission.required_mbits entries must be finite and >= 0")
    scheme_name = str(mdoc.get("scheme", "noma")).replace("-", "_").lower()
    try:
        scheme = Scheme(scheme_name)
    except ValueError as exc:
        raise BadUnits(f"unknown scheme {scheme_name!r}") from exc

    seed = int(doc.get("rng_seed", 0))
    scn = Scenario(
        radio=radio,
        uav=uav,
        mission=MissionSpec(required_bits=bits, scheme=scheme),
        base_stations=tuple(stations),
        rng_seed=seed,
    )
    candidates = _place_missing_positions(scn, candidates)
    return _reduce_served_users(scn, candidates)


def _place_missing_positions(scn: Scenario, candidates: list[list[GroundUser]]) -> list[list[GroundUser]]:
    """Draw positions for users declared without one, inside the mainlobe.

    Draws radius and bearing from the scenario RNG in GBS then candidate
    order, so a given seed always yields the same layout.
    """
    if all(g.position is not None for cands in candidates for g in cands):
        return candidates
    rng = np.random.default_rng(scn.rng_seed)
    placed: list[list[GroundUser]] = []
    for b, cands in zip(scn.base_stations, candidates):
        row = []
        for g in cands:
            if g.position is None:
                r_in, r_out = mainlobe_footprint(scn.radio, b.height_m, g.height_m)
                radius = rng.uniform(r_in, r_out)
                bearing = rng.uniform(0.0, 2.0 * math.pi)
                pos = b.position + radius * np.array([math.cos(bearing), math.sin(bearing)])
                g = replace(g, position=pos)
            row.append(g)
        placed.append(row)
    return placed


def _reduce_served_users(scn: Scenario, candidates: list[list[GroundUser]]) -> Scenario:
    """Collapse multi-user cells to one effective served user.

    The strongest candidate (largest received power at its own GBS) sets the
    cell's uplink signal; the effective rate target is then chosen so that
    the cell's protected radius equals the largest radius any candidate
    would demand.
    """
    stations = [
        replace(b, served_user=cands[0] if cands else None)
        if len(cands) <= 1
        else b
        for b, cands in zip(scn.base_stations, candidates)
    ]
    if all(len(c) <= 1 for c in candidates):
        return replace(scn, base_stations=tuple(stations))

    p_ue = dbm_to_watts(scn.radio.gue_tx_power_dbm)
    for m, cands in enumerate(candidates):
        if len(cands) > 1:
            gains = [_terrestrial_gain(scn.radio, scn.base_stations[m], g) for g in cands]
            stations[m] = replace(stations[m], served_user=cands[int(np.argmax(gains))])
    provisional = replace(scn, base_stations=tuple(stations))
    consts = derive_link_constants(provisional)

    for m, cands in enumerate(candidates):
        if len(cands) <= 1:
            continue
        inter = consts.intercell_plus_noise_watts[m]
        radii = [
            protected_radius_sq(
                consts.beta0,
                consts.height_diff_m,
                consts.alpha,
                _terrestrial_gain(scn.radio, scn.base_stations[m], g) * p_ue,
                inter,
                g.qos_bits_per_s_per_hz,
            )
            for g in cands
        ]
        worst = max(radii)
        strongest = stations[m].served_user
        if worst <= 0.0:
            theta_eff = 0.0
        else:
            s_eff = consts.signal_watts[m]
            uav_term = consts.beta0 / (worst + consts.height_diff_m**2) ** (consts.alpha / 2.0)
            theta_eff = math.log2(1.0 + s_eff / (uav_term + inter))
        stations[m] = replace(stations[m], served_user=replace(strongest, qos_bits_per_s_per_hz=theta_eff))
    return replace(scn, base_stations=tuple(stations))


def load_scenario(config_text: str) -> Scenario:
    """Parse a JSON scenario document into a validated :class:`Scenario`."""
    try:
        doc = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise BadUnits(f"scenario document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise BadUnits("scenario document must be a JSON object")
    return scenario_from_dict(doc)


def scenario_to_dict(scn: Scenario) -> dict:
    """Serialize back to the document form (config units, full precision)."""
    stations = []
    for b in scn.base_stations:
        bdoc: dict = {"id": b.id, "position": list(map(float, b.position)), "height_m": b.height_m}
        if b.served_user is not None:
            g = b.served_user
            bdoc["gue"] = {
                "position": list(map(float, g.position)),
                "height_m": g.height_m,
                "qos_bits_per_s_per_hz": g.qos_bits_per_s_per_hz,
            }
        else:
            bdoc["gue"] = None
        stations.append(bdoc)
    return {
        "radio": {k: getattr(scn.radio, k) for k in _RADIO_FIELDS},
        "uav": {
            "height_m": scn.uav.height_m,
            "max_speed_m_s": scn.uav.max_speed_m_s,
            "start": list(map(float, scn.uav.start)),
            "goal": list(map(float, scn.uav.goal)),
        },
        "mission": {
            "required_mbits": [float(v) / 1e6 for v in scn.mission.required_bits],
            "scheme": scn.mission.scheme.value,
        },
        "base_stations": stations,
        "rng_seed": scn.rng_seed,
    }


def scenario_digest(scn: Scenario) -> str:
    """Content hash of the scenario, stable across re-serialization."""
    blob = json.dumps(scenario_to_dict(scn), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def with_uniform_qos(scn: Scenario, theta: float) -> Scenario:
    """Copy of the scenario with every served user's rate target replaced."""
    stations = tuple(
        replace(b, served_user=replace(b.served_user, qos_bits_per_s_per_hz=float(theta)))
        if b.served_user is not None
        else b
        for b in scn.base_stations
    )
    return replace(scn, base_stations=stations)


def with_uniform_bits(scn: Scenario, bits: float) -> Scenario:
    """Copy of the scenario with every upload requirement replaced (bits)."""
    mission = replace(scn.mission, required_bits=np.full(scn.n_gbs, float(bits)))
    return replace(scn, mission=mission)

"""Earthquake confirmation from trigger streams.

Triggers are clustered with DBSCAN over a conjunctive space-time
neighbourhood (within ``eps_space`` km AND ``eps_time`` s), with core points
decided by summed quality weight instead of a point count. Confirmed
clusters are located by a coarse-to-fine grid search on a weighted L1
travel-time misfit.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from eewsim.errors import ConfigurationError, ContractError, EstimationError
from eewsim.geo import EARTH_RADIUS_KM, KM_PER_DEG, GeoPoint, WaveSpeeds, haversine_km
from eewsim.gmm import GAL_PER_MS2, GroundMotionModel, invert_magnitude
from eewsim.trigger import require_sorted


@dataclass(frozen=True)
class DetectorParams:
    eps_space: float = 30.0
    eps_time: float = 20.0
    min_weight: float = 6.0
    window: float = 120.0
    coarse_spacing: float = 8.0
    refine_levels: int = 2
    # coarse minima carried into refinement
    refine_candidates: int = 4
    search_radius: float = 50.0
    moveout_tol: float = 2.0
    min_consistency: float = 0.75
    # the location fit has three free parameters; fewer members prove nothing
    min_members: int = 6
    search_depth: float = 0.0
    # continuous refinement after the finest grid level
    polish: bool = True
    # re-estimate a confirmed event whenever its member count grows by this factor
    update_growth: float = 2.0

    def __post_init__(self):
        for name in ("eps_space", "eps_time", "min_weight", "window", "coarse_spacing",
                     "search_radius", "moveout_tol"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigurationError(f"detector.{name} must be positive, got {v}")
        if self.min_members < 2:
            raise ConfigurationError("detector.min_members must be >= 2")
        if self.refine_candidates < 1:
            raise ConfigurationError("detector.refine_candidates must be >= 1")
        if self.refine_levels < 0:
            raise ConfigurationError("detector.refine_levels must be >= 0")
        if not 0.0 <= self.min_consistency <= 1.0:
            raise ConfigurationError("detector.min_consistency must lie in [0, 1]")
        if self.window < self.eps_time:
            raise ConfigurationError("detector.window must be >= eps_time")
        if self.search_depth < 0:
            raise ConfigurationError("detector.search_depth must be >= 0")
        if self.update_growth <= 1.0:
            raise ConfigurationError("detector.update_growth must be > 1")

    @property
    def final_spacing(self) -> float:
        return self.coarse_spacing / 2 ** self.refine_levels


# ----------------------------------------------------------------------------
# clustering


def _arrays(stream):
    lat = np.fromiter((m.location.lat for m in stream), float, len(stream))
    lon = np.fromiter((m.location.lon for m in stream), float, len(stream))
    t = np.fromiter((m.t_report for m in stream), float, len(stream))
    w = np.fromiter((m.weight for m in stream), float, len(stream))
    return lat, lon, t, w


def st_neighbors(t, stream, eps_space: float, eps_time: float):
    """Triggers other than ``t`` within ``eps_space`` km and ``eps_time`` s of it."""
    if not stream:
        return []
    lat, lon, tt, _ = _arrays(stream)
    d = haversine_km(t.location.lat, t.location.lon, lat, lon)
    ok = (d <= eps_space) & (np.abs(tt - t.t_report) <= eps_time)
    return [u for u, k in zip(stream, ok) if k and u is not t]


_PAIR_BLOCK = 1 << 20


def _edges(lat, lon, t, eps_space, eps_time):
    """Undirected neighbour pairs (i < j) for a time-sorted trigger set."""
    n = len(t)
    # candidate range from the sorted times, exact predicate below
    his = np.searchsorted(t, t + eps_time * (1 + 1e-9) + 1e-9, side="right")
    counts = np.maximum(his - np.arange(n) - 1, 0)
    ends = np.cumsum(counts)
    lat_gate = math.degrees(eps_space / EARTH_RADIUS_KM) * (1 + 1e-9) + 1e-12
    src_out, dst_out = [], []
    row = 0
    while row < n:
        # rows [row, stop) hold at most about _PAIR_BLOCK candidate pairs
        base = ends[row] - counts[row]
        stop = max(int(np.searchsorted(ends, base + _PAIR_BLOCK, side="right")), row + 1)
        c = counts[row:stop]
        total = int(c.sum())
        if total:
            src = np.repeat(np.arange(row, stop), c)
            starts = np.cumsum(c) - c
            dst = src + 1 + np.arange(total) - np.repeat(starts, c)
            # distance is at least R * |dlat|, a cheap necessary condition
            keep = np.abs(lat[dst] - lat[src]) <= lat_gate
            src, dst = src[keep], dst[keep]
            d = haversine_km(lat[src], lon[src], lat[dst], lon[dst])
            ok = (d <= eps_space) & (np.abs(t[dst] - t[src]) <= eps_time)
            src_out.append(src[ok])
            dst_out.append(dst[ok])
        row = stop
    if not src_out:
        return np.empty(0, int), np.empty(0, int)
    return np.concatenate(src_out), np.concatenate(dst_out)


def dbscan_labels(lat, lon, t, w, eps_space, eps_time, min_weight):
    """Cluster label per trigger, -1 for noise.

    Labels follow the classic sequential scan: clusters are numbered in the
    order their first core point appears, and a border point belongs to the
    earliest-numbered cluster that owns one of its core neighbours.
    """
    n = len(t)
    labels = np.full(n, -1)
    if n == 0:
        return labels
    src, dst = _edges(lat, lon, t, eps_space, eps_time)
    wsum = w.copy()
    np.add.at(wsum, src, w[dst])
    np.add.at(wsum, dst, w[src])
    core = wsum >= min_weight
    if not core.any():
        return labels

    cc = core[src] & core[dst]
    g = coo_matrix((np.ones(cc.sum()), (src[cc], dst[cc])), shape=(n, n))
    _, comp = connected_components(g, directed=False)
    core_idx = np.flatnonzero(core)
    # cluster number = rank of the component's first core point
    first = {}
    for i in core_idx:
        first.setdefault(comp[i], i)
    rank = {c: r for r, c in enumerate(sorted(first, key=first.get))}
    labels[core_idx] = [rank[comp[i]] for i in core_idx]

    # border points: core neighbour with the smallest cluster number
    for a, b in ((src, dst), (dst, src)):
        m = ~core[a] & core[b]
        for i, j in zip(a[m], b[m]):
            lj = labels[j]
            if labels[i] == -1 or lj < labels[i]:
                labels[i] = lj
    return labels


def cluster_triggers(stream, params: DetectorParams):
    """DBSCAN over the stream. Returns ``(clusters, noise)`` as index lists."""
    require_sorted(stream)
    lat, lon, t, w = _arrays(stream)
    labels = dbscan_labels(lat, lon, t, w, params.eps_space, params.eps_time, params.min_weight)
    k = labels.max() + 1 if len(labels) else 0
    clusters = [np.flatnonzero(labels == c).tolist() for c in range(k)]
    noise = np.flatnonzero(labels == -1).tolist()
    return clusters, noise


# ----------------------------------------------------------------------------
# parameter estimation


def weighted_median(values, weights) -> float:
    """Lower weighted median: smallest value whose cumulative weight reaches half."""
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if v.size == 0:
        raise EstimationError("weighted median of an empty set")
    if not w.sum() > 0:
        w = np.ones_like(v)
    order = np.argsort(v, kind="stable")
    cw = np.cumsum(w[order])
    return float(v[order][np.searchsorted(cw, cw[-1] / 2.0)])


def _row_weighted_median(vals, w):
    order = np.argsort(vals, axis=1, kind="stable")
    sv = np.take_along_axis(vals, order, axis=1)
    cw = np.cumsum(w[order], axis=1)
    idx = np.argmax(cw >= cw[:, -1:] / 2.0, axis=1)
    return sv[np.arange(len(vals)), idx]


def _effective_weights(w):
    return w if w.sum() > 0 else np.ones_like(w)


@dataclass
class _Fit:
    lat: float
    lon: float
    t0: float
    misfit: float


def _locate(lat, lon, t, w, params: DetectorParams, vp: float) -> _Fit:
    w = _effective_weights(w)
    t_ref = float(t.min())
    tr = t - t_ref
    lat_c = float(np.average(lat, weights=w))
    lon_c = float(np.average(lon, weights=w))
    kx = KM_PER_DEG * max(math.cos(math.radians(lat_c)), 1e-6)
    depth = params.search_depth
    mlat, mlon = np.radians(lat)[None, :], np.radians(lon)[None, :]
    mcos = np.cos(mlat)

    def evaluate(xs, ys):
        # haversine with the member terms hoisted out of the candidate loop
        clat = np.radians(np.clip(lat_c + ys / KM_PER_DEG, -90.0, 90.0))[:, None]
        clon = np.radians(lon_c + xs / kx)[:, None]
        h = np.sin((mlat - clat) / 2) ** 2 + np.cos(clat) * mcos * np.sin((mlon - clon) / 2) ** 2
        d = 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
        tt = tr[None, :] - np.hypot(d, depth) / vp
        t0 = _row_weighted_median(tt, w)
        return (w * np.abs(tt - t0[:, None])).sum(axis=1), t0

    def pick(xs, ys):
        obj, t0 = evaluate(xs, ys)
        lo = obj.min()
        tied = np.flatnonzero(obj <= lo + 1e-9 * (1.0 + abs(lo)))
        # ties go to the candidate nearest the weighted centroid
        k = tied[np.argmin(np.hypot(xs[tied], ys[tied]))]
        return xs[k], ys[k], obj[k], t0[k]

    spacing = params.coarse_spacing
    n = int(math.floor(params.search_radius / spacing + 1e-9))
    g = np.arange(-n, n + 1) * spacing
    X, Y = np.meshgrid(g, g)
    inside = X ** 2 + Y ** 2 <= params.search_radius ** 2 * (1 + 1e-9)
    xs, ys = X[inside], Y[inside]
    obj, _ = evaluate(xs, ys)
    # refine several coarse minima: with few members the misfit surface has
    # more than one basin and the best coarse node can sit in the wrong one
    starts = [(xs[k], ys[k]) for k in np.argsort(obj, kind="stable")[: params.refine_candidates]]
    # the earliest reporter is the classic first guess and lies near the
    # source when the basin is narrower than the coarse grid
    first = int(np.argmin(t))
    fx0, fy0 = (lon[first] - lon_c) * kx, (lat[first] - lat_c) * KM_PER_DEG
    if fx0 ** 2 + fy0 ** 2 <= params.search_radius ** 2:
        starts.append((fx0, fy0))
    step = np.arange(-2, 3)
    finals = []
    for bx, by in starts:
        sp = params.coarse_spacing
        bobj, bt0 = None, None
        for _ in range(params.refine_levels):
            sp /= 2.0
            X, Y = np.meshgrid(bx + step * sp, by + step * sp)
            bx, by, bobj, bt0 = pick(X.ravel(), Y.ravel())
        if bobj is None:
            bx, by, bobj, bt0 = pick(np.array([bx]), np.array([by]))
        finals.append((bx, by, bobj, bt0))
    spacing = params.final_spacing
    r2 = params.search_radius ** 2

    def f(p):
        over = p[0] ** 2 + p[1] ** 2 - r2
        val = float(evaluate(np.array([p[0]]), np.array([p[1]]))[0][0])
        return val if over <= 0 else val + 1e6 * (1.0 + over)

    def polish(bx, by, bobj, bt0):
        s = spacing
        # stay inside the finest grid neighbourhood
        bounds = [(bx - 2 * s, bx + 2 * s), (by - 2 * s, by + 2 * s)]
        res = minimize(f, [bx, by], method="Nelder-Mead", bounds=bounds,
                       options={"initial_simplex": [[bx, by], [bx + s, by], [bx, by + s]],
                                "xatol": 1e-3, "fatol": 1e-9 * (1.0 + bobj), "maxiter": 200})
        if res.fun < bobj - 1e-9 * (1.0 + abs(bobj)):
            obj, t0 = evaluate(np.array([res.x[0]]), np.array([res.x[1]]))
            return res.x[0], res.x[1], obj[0], t0[0]
        return bx, by, bobj, bt0

    fx, fy = np.array([c[0] for c in finals]), np.array([c[1] for c in finals])
    bx, by, bobj, bt0 = pick(fx, fy)
    if params.polish and len(t) >= 3:
        bx, by, bobj, bt0 = polish(bx, by, bobj, bt0)

    lat_e = float(np.clip(lat_c + by / KM_PER_DEG, -90.0, 90.0))
    lon_e = float((lon_c + bx / kx + 180.0) % 360.0 - 180.0)
    return _Fit(lat_e, lon_e, float(bt0) + t_ref, float(bobj))


def _require_members(members, k=2):
    if len(members) < k:
        raise ContractError(f"need at least {k} members, got {len(members)}")


def estimate_location(members, params: DetectorParams, speeds: WaveSpeeds = WaveSpeeds()) -> GeoPoint:
    """Epicentre minimising the weighted L1 P-wave travel-time misfit."""
    _require_members(members)
    lat, lon, t, w = _arrays(members)
    fit = _locate(lat, lon, t, w, params, speeds.vp)
    return GeoPoint(fit.lat, fit.lon)


def _hyp(members_lat, members_lon, epicenter, depth):
    d = haversine_km(epicenter.lat, epicenter.lon, members_lat, members_lon)
    return np.hypot(d, depth)


def estimate_origin_time(members, epicenter: GeoPoint, vp: float = 6.0, depth: float = 0.0) -> float:
    """Weighted median of back-projected P origin times."""
    _require_members(members, 1)
    lat, lon, t, w = _arrays(members)
    return weighted_median(t - _hyp(lat, lon, epicenter, depth) / vp, w)


def estimate_magnitude(members, epicenter: GeoPoint, gmm: GroundMotionModel, depth: float = 0.0) -> float:
    """Weighted median of per-trigger magnitudes from inverted amplitudes.

    ``gmm`` must describe the amplitude the triggers report (for P-wave
    triggers, the P-scaled model).
    """
    amp = np.array([m.amplitude for m in members], dtype=float)
    pos = amp > 0
    if not pos.any():
        raise EstimationError("no member with a positive amplitude")
    lat, lon, _, w = _arrays(members)
    d = _hyp(lat[pos], lon[pos], epicenter, depth)
    mags = invert_magnitude(gmm, np.log10(amp[pos] * GAL_PER_MS2), d)
    return weighted_median(np.atleast_1d(mags), w[pos])


def _consistency(lat, lon, t, fit: _Fit, params: DetectorParams, speeds: WaveSpeeds):
    d = _hyp(lat, lon, GeoPoint(fit.lat, fit.lon), params.search_depth)
    dt = t - fit.t0
    resid = dt - d / speeds.vp
    # apparent speed d/dt in [vs/2, 2 vp], written without the division
    ok = (np.abs(resid) <= params.moveout_tol) & (0.5 * speeds.vs * dt <= d) & (d <= 2.0 * speeds.vp * dt)
    return float(ok.mean())


def plausibility_filter(members, params: DetectorParams, speeds: WaveSpeeds = WaveSpeeds()):
    """``(passed, fraction)``: share of members whose timing fits one moving wavefront."""
    if len(members) < 2:
        return False, 0.0
    lat, lon, t, w = _arrays(members)
    fit = _locate(lat, lon, t, w, params, speeds.vp)
    frac = _consistency(lat, lon, t, fit, params, speeds)
    return len(members) >= params.min_members and frac >= params.min_consistency, frac


# ----------------------------------------------------------------------------
# events


@dataclass(frozen=True)
class Estimate:
    epicenter: GeoPoint
    origin_time: float
    magnitude: float
    n: int
    weight: float
    consistency: float
    magnitude_error: str | None = None


@dataclass
class Estimator:
    """Bundles what parameter estimation needs beyond the members."""

    params: DetectorParams = field(default_factory=DetectorParams)
    speeds: WaveSpeeds = field(default_factory=WaveSpeeds)
    # model for the amplitudes the triggers report
    gmm: GroundMotionModel = field(default_factory=GroundMotionModel)

    def estimate(self, members) -> Estimate:
        lat, lon, t, w = _arrays(members)
        fit = _locate(lat, lon, t, w, self.params, self.speeds.vp)
        epi = GeoPoint(fit.lat, fit.lon)
        frac = _consistency(lat, lon, t, fit, self.params, self.speeds)
        try:
            mag, err = estimate_magnitude(members, epi, self.gmm, self.params.search_depth), None
        except EstimationError as exc:
            mag, err = math.nan, str(exc)
        return Estimate(epi, fit.t0, mag, len(members), float(w.sum()), frac, err)


@dataclass
class DetectionEvent:
    t_alert: float
    first: Estimate
    final: Estimate
    alert_members: tuple
    members: tuple

    @property
    def est_epicenter(self) -> GeoPoint:
        return self.first.epicenter

    @property
    def est_origin_time(self) -> float:
        return self.first.origin_time

    @property
    def est_magnitude(self) -> float:
        return self.first.magnitude

    @property
    def weight(self) -> float:
        return self.final.weight


class _Tracked:
    """Growing member set of one confirmed event.

    Member positions are kept in radians with cos(lat) so that the join test
    compares the haversine term against a precomputed threshold.
    """

    def __init__(self, event, indices, lat, lon, t):
        self.event = event
        self.indices = list(indices)
        self._n = len(indices)
        cap = max(64, 2 * self._n)
        self.phi = np.empty(cap)
        self.lam = np.empty(cap)
        self.cphi = np.empty(cap)
        self.t = np.empty(cap)
        self.phi[: self._n] = np.radians(lat)
        self.lam[: self._n] = np.radians(lon)
        self.cphi[: self._n] = np.cos(self.phi[: self._n])
        self.t[: self._n] = t
        self.n_estimated = self._n
        self.done = False

    def add(self, idx, lat, lon, t):
        if self._n == len(self.t):
            for name in ("phi", "lam", "cphi", "t"):
                arr = getattr(self, name)
                setattr(self, name, np.concatenate([arr, np.empty_like(arr)]))
        phi = math.radians(lat)
        self.phi[self._n], self.lam[self._n], self.cphi[self._n] = phi, math.radians(lon), math.cos(phi)
        self.t[self._n] = t
        self.indices.append(idx)
        self._n += 1

    @property
    def last_t(self) -> float:
        return float(self.t[self._n - 1])

    def touches(self, lat, lon, t, eps_space, eps_time) -> bool:
        lo = int(np.searchsorted(self.t[: self._n], t - eps_time, side="left"))
        if lo >= self._n:
            return False
        sl = slice(lo, self._n)
        phi, lam = math.radians(lat), math.radians(lon)
        h = (np.sin((self.phi[sl] - phi) / 2) ** 2
             + math.cos(phi) * self.cphi[sl] * np.sin((self.lam[sl] - lam) / 2) ** 2)
        # d <= eps  <=>  h <= sin^2(eps / 2R) for eps below half the circumference
        h_eps = math.sin(min(eps_space / (2 * EARTH_RADIUS_KM), math.pi / 2)) ** 2
        near_t = np.abs(self.t[sl] - t) <= eps_time
        return bool(np.any(near_t & (h <= h_eps)))


class OnlineDetector:
    """Single-consumer streaming detector over a time-ordered trigger feed.

    Call :meth:`push` per trigger and :meth:`finish` at end of stream. The
    detector keeps ``params.window`` seconds of triggers, re-clusters the
    ones not yet attached to a confirmed event after each arrival, and
    confirms a cluster once its weight reaches ``min_weight`` and it passes
    :func:`plausibility_filter`. Later triggers neighbouring a confirmed
    event's members join it without a second alert.
    """

    def __init__(self, estimator: Estimator | None = None):
        self.estimator = estimator or Estimator()
        self.params = self.estimator.params
        self._msgs = []
        self._buffer = deque()
        self._owner = {}
        self._tracked = []
        self._verdicts = {}

    @property
    def events(self):
        return [tr.event for tr in self._tracked]

    def push(self, msg):
        """Feed one trigger; returns the newly confirmed events (usually none)."""
        p = self.params
        if self._msgs and msg.t_report < self._msgs[-1].t_report:
            raise ContractError(
                f"trigger at t={msg.t_report} arrived after t={self._msgs[-1].t_report}")
        idx = len(self._msgs)
        self._msgs.append(msg)

        while self._buffer and self._msgs[self._buffer[0]].t_report < msg.t_report - p.window:
            self._buffer.popleft()
        self._buffer.append(idx)

        for tr in self._tracked:
            if not tr.done and msg.t_report - tr.last_t > p.eps_time:
                self._finalize(tr)

        for tr in self._tracked:
            if not tr.done and tr.touches(msg.location.lat, msg.location.lon, msg.t_report,
                                          p.eps_space, p.eps_time):
                tr.add(idx, msg.location.lat, msg.location.lon, msg.t_report)
                self._owner[idx] = tr
                if len(tr.indices) >= p.update_growth * tr.n_estimated:
                    self._update(tr)
                return []

        return self._confirm(msg.t_report)

    def _confirm(self, now):
        p = self.params
        pool = [i for i in self._buffer if i not in self._owner]
        if len(pool) < 2:
            return []
        sub = [self._msgs[i] for i in pool]
        lat, lon, t, w = _arrays(sub)
        labels = dbscan_labels(lat, lon, t, w, p.eps_space, p.eps_time, p.min_weight)
        new = []
        for c in range(labels.max() + 1):
            loc = np.flatnonzero(labels == c)
            if loc.size < max(2, p.min_members) or w[loc].sum() < p.min_weight:
                continue
            key = frozenset(pool[k] for k in loc)
            if key not in self._verdicts:
                members = [sub[k] for k in loc]
                est = self.estimator.estimate(members)
                self._verdicts[key] = est if est.consistency >= p.min_consistency else None
            est = self._verdicts[key]
            if est is None:
                continue
            indices = sorted(key)
            ids = tuple(self._msgs[i].phone_id for i in indices)
            event = DetectionEvent(now, est, est, ids, ids)
            tr = _Tracked(event, indices, lat[loc], lon[loc], t[loc])
            for i in indices:
                self._owner[i] = tr
            self._tracked.append(tr)
            new.append(event)
        return new

    def _update(self, tr):
        members = [self._msgs[i] for i in tr.indices]
        tr.event.final = self.estimator.estimate(members)
        tr.event.members = tuple(m.phone_id for m in members)
        tr.n_estimated = len(members)

    def _finalize(self, tr):
        """Settle membership on the DBSCAN cluster of the buffered triggers."""
        p = self.params
        buf = list(self._buffer)
        if buf:
            sub = [self._msgs[i] for i in buf]
            lat, lon, t, w = _arrays(sub)
            labels = dbscan_labels(lat, lon, t, w, p.eps_space, p.eps_time, p.min_weight)
            mine = set(tr.indices)
            in_buf = np.array([i in mine for i in buf])
            votes = labels[in_buf & (labels >= 0)]
            if votes.size:
                best = int(np.bincount(votes).argmax())
                claimed = {buf[k] for k in np.flatnonzero(labels == best)}
                claimed = {i for i in claimed if self._owner.get(i) in (None, tr)}
                first = buf[0]
                keep = [i for i in tr.indices if i < first]
                tr.indices = sorted(set(keep) | claimed)
                for i in tr.indices:
                    self._owner[i] = tr
        tr.done = True
        self._update(tr)

    def finish(self):
        for tr in self._tracked:
            if not tr.done:
                self._finalize(tr)
        return self.events


def online_detect(stream, params: DetectorParams | None = None, estimator: Estimator | None = None):
    """Replay a time-ordered stream through :class:`OnlineDetector`."""
    if estimator is None:
        estimator = Estimator(params or DetectorParams())
    require_sorted(stream)
    det = OnlineDetector(estimator)
    for msg in stream:
        det.push(msg)
    return det.finish()

"""
Frame-to-frame linking of defect observations into trajectories.

For each new frame, every live trajectory (last seen no more than
``memory_frames + 1`` frames ago) is a source and every observation is a
destination. Pairs closer than the search range are candidates; candidates
split into independent subnetworks, and each subnetwork is solved exactly by
branch and bound for the assignment with the lowest total cost:
squared displacement of every link plus ``search_range ** 2`` for every
source or destination left unlinked.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from geometry.observation import DefectObservation
from utils.exceptions import SubnetOversizeError


class LinkParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    search_range_px: float = Field(10.0, gt=0)
    memory_frames: int = Field(3, ge=0)
    max_subnet_size: int = Field(12, ge=2)  # sources + destinations in one subnetwork


@dataclass
class Trajectory:
    id: int
    observations: List[DefectObservation]
    gaps: List[int] = field(default_factory=list)

    @property
    def frames(self) -> List[int]:
        return [obs.frame for obs in self.observations]

    @property
    def first_frame(self) -> int:
        return self.observations[0].frame

    @property
    def last_frame(self) -> int:
        return self.observations[-1].frame

    @property
    def lifetime(self) -> int:
        return self.last_frame - self.first_frame + 1

    def positions(self) -> np.ndarray:
        return np.array([(obs.center_x, obs.center_y) for obs in self.observations], dtype=float)

    def lagged_pairs(self, lag: int = 1) -> List[Tuple[DefectObservation, DefectObservation]]:
        """Observation pairs exactly ``lag`` frames apart."""
        by_frame = {obs.frame: obs for obs in self.observations}
        return [(obs, by_frame[obs.frame + lag]) for obs in self.observations if obs.frame + lag in by_frame]


@dataclass
class _Track:
    observations: List[DefectObservation]
    gaps: List[int] = field(default_factory=list)

    @property
    def last(self) -> DefectObservation:
        return self.observations[-1]


def _solve_subnet(sq_dist: np.ndarray, penalty: float) -> List[Tuple[int, int]]:
    """
    Exact minimum-cost assignment for one subnetwork.

    Cost of an assignment is ``penalty * (S + D) + sum(d2 - 2 * penalty)`` over
    linked pairs, so only the second term varies. Non-candidates are ``inf``.

    Returns:
        List[Tuple[int, int]]: (source, destination) pairs.
    """
    n_src = sq_dist.shape[0]
    gain = sq_dist - 2.0 * penalty  # negative for every candidate
    options = []
    for s in range(n_src):
        cands = np.flatnonzero(np.isfinite(sq_dist[s]))
        options.append([int(d) for d in cands[np.argsort(sq_dist[s, cands], kind="stable")]])
    order = sorted(range(n_src), key=lambda s: (len(options[s]), s))
    # best remaining gain if every later source got its favourite destination
    optimistic = [min((gain[s, d] for d in options[s]), default=0.0) for s in order]
    tail_bound = np.concatenate([np.cumsum(optimistic[::-1])[::-1], [0.0]])

    # the empty assignment costs 0 and is always feasible
    best_cost = 0.0
    best_pairs: List[Tuple[int, int]] = []
    chosen: List[Tuple[int, int]] = []
    taken = set()

    def descend(depth: int, cost: float) -> None:
        nonlocal best_cost, best_pairs
        if cost + tail_bound[depth] >= best_cost:
            return
        if depth == len(order):
            if cost < best_cost:
                best_cost, best_pairs = cost, list(chosen)
            return
        s = order[depth]
        for d in options[s]:
            if d in taken:
                continue
            taken.add(d)
            chosen.append((s, d))
            descend(depth + 1, cost + gain[s, d])
            chosen.pop()
            taken.discard(d)
        descend(depth + 1, cost)

    descend(0, 0.0)
    return best_pairs


def _assign(
    sources: Sequence[DefectObservation],
    dests: Sequence[DefectObservation],
    params: LinkParams,
    frame: int,
) -> Dict[int, int]:
    """Destination index -> source index for one frame transition."""
    if not sources or not dests:
        return {}
    src_xy = np.array([(o.center_x, o.center_y) for o in sources])
    dst_xy = np.array([(o.center_x, o.center_y) for o in dests])
    dist = cdist(src_xy, dst_xy)
    candidate = dist < params.search_range_px
    if not candidate.any():
        return {}

    n_src, n_dst = len(sources), len(dests)
    rows, cols = np.nonzero(candidate)
    graph = coo_matrix((np.ones(rows.size), (rows, cols + n_src)), shape=(n_src + n_dst, n_src + n_dst))
    _, labels = connected_components(graph, directed=False)

    penalty = params.search_range_px ** 2
    links: Dict[int, int] = {}
    for component in np.unique(labels[rows]):
        src_idx = np.flatnonzero(labels[:n_src] == component)
        dst_idx = np.flatnonzero(labels[n_src:] == component)
        size = src_idx.size + dst_idx.size
        if size > params.max_subnet_size:
            raise SubnetOversizeError(frame, size, params.max_subnet_size)
        sq = np.where(candidate[np.ix_(src_idx, dst_idx)], dist[np.ix_(src_idx, dst_idx)] ** 2, np.inf)
        for s, d in _solve_subnet(sq, penalty):
            links[int(dst_idx[d])] = int(src_idx[s])
    return links


def link(frames: Mapping[int, Sequence[DefectObservation]], params: LinkParams = LinkParams()) -> List[Trajectory]:
    """
    Links per-frame observations into trajectories.

    Args:
        frames (Mapping[int, Sequence[DefectObservation]]): Observations keyed by frame index.
        params (LinkParams): Search range, memory and subnetwork limit.

    Returns:
        List[Trajectory]: Every input observation in exactly one trajectory; ids
        numbered from 0 by (first frame, first x, first y).

    Raises:
        SubnetOversizeError: A subnetwork exceeds ``max_subnet_size``.
    """
    tracks: List[_Track] = []
    for frame in sorted(frames):
        observations = list(frames[frame])
        alive = [t for t in tracks if frame - t.last.frame <= params.memory_frames + 1]
        links = _assign([t.last for t in alive], observations, params, frame)

        for d, obs in enumerate(observations):
            source: Optional[int] = links.get(d)
            if source is None:
                tracks.append(_Track([obs]))
                continue
            track = alive[source]
            track.gaps.extend(range(track.last.frame + 1, frame))
            track.observations.append(obs)

    tracks.sort(key=lambda t: (t.observations[0].frame, t.observations[0].center_x, t.observations[0].center_y))
    return [Trajectory(id=i, observations=t.observations, gaps=t.gaps) for i, t in enumerate(tracks)]


def assignment_cost(
    sources: Sequence[DefectObservation],
    dests: Sequence[DefectObservation],
    pairs: Sequence[Tuple[int, int]],
    search_range_px: float,
) -> float:
    """Total cost of a transition: squared link lengths plus the unlinked penalty."""
    linked = sum(
        (sources[s].center_x - dests[d].center_x) ** 2 + (sources[s].center_y - dests[d].center_y) ** 2
        for s, d in pairs
    )
    unlinked = len(sources) + len(dests) - 2 * len(pairs)
    return linked + unlinked * search_range_px ** 2

import numpy as np

from intentraj.data import SynthConfig, generate_synthetic


def _ray_point_distance(a, b, p):
    ab = b - a
    t = max(np.dot(p - a, ab) / np.dot(ab, ab), 0.0)
    return float(np.linalg.norm(a + t * ab - p))


def select_unambiguous(records, imap, clearance=1.5, min_len=46):
    """Trajectories whose motion ray stays clear of all non-goal regions.

    A straight walk whose ray (from start through the goal, extended past
    it) grazes a second goal region is genuinely ambiguous for any
    distance-based intention update — both hypotheses admit goals on the
    same ray — so convergence scenarios are built from trajectories whose
    ray keeps ``clearance`` meters from every other region center.
    """
    centers = imap.centers()
    out = []
    for rec in records:
        if len(rec.trajectory) < min_len:
            continue
        a, b = rec.trajectory.points[0], rec.trajectory.points[-1]
        if all(
            _ray_point_distance(a, b, centers[j]) >= clearance
            for j in range(len(imap))
            if j != rec.goal_region_id
        ):
            out.append(rec)
    return out


def straight_corpus(imap, num, rng_seed, speed_range=(0.07, 0.1)):
    """Noiseless straight trajectories with unambiguous goal geometry."""
    cfg = SynthConfig(map=imap, num_trajectories=max(40, 6 * num), rng_seed=rng_seed,
                      speed_range=speed_range)
    return select_unambiguous(generate_synthetic(cfg), imap)[:num]

import numpy as np
import pytest

from iterbias.world import WorldSpec, build_world


def explicit(rows, prior="uniform", q="uniform"):
    return build_world(WorldSpec(family="explicit", relevance=rows, prior=prior, q=q))


def threshold(M=5, noise=0.1, **kw):
    return build_world(WorldSpec(family="threshold", M=M, noise=noise, **kw))


def brute_force_transition(world, selection, label_source="chain", target=None, p_act=(1.0, 1.0), aware=None):
    """Enumerate every (x, y*, a) outcome with plain-probability Bayes from the prior.

    ``aware`` is an assumed ``(p(a=1|y*=0), p(a=1|y*=1))`` pair or None for ignore mode.
    """
    H, M = world.relevance.shape
    prior = np.asarray(world.prior)
    T = np.zeros((H, H))
    for j in range(H):
        src = j if label_source == "chain" else target
        for x in range(M):
            for y_star in (0, 1):
                p_y = world.relevance[src, x] if y_star == 1 else 1 - world.relevance[src, x]
                for a in (0, 1):
                    p_a = p_act[y_star] if a == 1 else 1 - p_act[y_star]
                    w = selection[j, x] * p_y * p_a
                    if w == 0:
                        continue
                    if a == 1:
                        lik = np.array([world.relevance[h, x] if y_star else 1 - world.relevance[h, x]
                                        for h in range(H)])
                    elif aware is None:
                        lik = np.ones(H)
                    else:
                        lik = np.array([(1 - aware[1]) * world.relevance[h, x] + (1 - aware[0]) * (1 - world.relevance[h, x])
                                        for h in range(H)])
                    post = prior * lik
                    T[:, j] += w * post / post.sum()
    return T


@pytest.fixture
def world5():
    return threshold(5, 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

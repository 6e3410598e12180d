"""Exact tabular decision-process oracles.

Small MDPs and Markov games with dense transition/reward tensors, plus the
operations needed to check potential-based shaping claims exactly: value
iteration with argmax *sets*, reward-tensor shaping, discounted returns,
paired TD learners, and exhaustive deterministic Nash enumeration.

Everything here is deliberately brute-force and dense; instances are desk
scale (a handful of states) and exactness beats speed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ContractError,
    DimensionError,
    DomainError,
    EnumerationCapError,
    GridkickError,
    ValidationError,
)

_ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class TabularMDP:
    """Finite MDP with transition P[s, a, s'] and reward r[s, a, s'].

    Terminal states must be absorbing with zero onward reward; the initial
    distribution is a probability vector over states.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    terminals: frozenset[int] = field(default_factory=frozenset)
    initial_dist: np.ndarray | None = None

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    def validate(self) -> None:
        P, R = self.transition, self.reward
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise DimensionError(f"transition must be (S, A, S), got {P.shape}")
        if R.shape != P.shape:
            raise DimensionError(f"reward shape {R.shape} != transition shape {P.shape}")
        if not (0.0 <= self.discount < 1.0):
            raise DomainError(f"discount must lie in [0, 1), got {self.discount}")
        if np.any(P < -_ROW_SUM_TOL):
            raise ValidationError("transition has negative entries")
        row_sums = P.sum(axis=2)
        if np.max(np.abs(row_sums - 1.0)) > _ROW_SUM_TOL:
            raise ValidationError("transition rows must sum to 1 within 1e-12")
        for s in self.terminals:
            if not (0 <= s < self.num_states):
                raise ValidationError(f"terminal state {s} out of range")
            if np.max(np.abs(P[s] - _absorbing_row(self.num_states, s))) > _ROW_SUM_TOL:
                raise ValidationError(f"terminal state {s} is not absorbing")
            if np.max(np.abs(R[s])) > 0.0:
                raise ValidationError(f"terminal state {s} has nonzero onward reward")
        if self.initial_dist is not None:
            rho = self.initial_dist
            if rho.shape != (self.num_states,):
                raise DimensionError("initial_dist length mismatch")
            if np.any(rho < 0) or abs(rho.sum() - 1.0) > _ROW_SUM_TOL:
                raise ValidationError("initial_dist must sum to 1 within 1e-12")


def _absorbing_row(n: int, s: int) -> np.ndarray:
    row = np.zeros(n)
    row[s] = 1.0
    return row


@dataclass(frozen=True)
class MarkovGame:
    """Finite n-player Markov game over a flattened joint-action axis.

    ``transition[s, j, s']`` and ``rewards[i][s, j, s']`` index joint action
    ``j = ravel(a_1, ..., a_n)`` with per-player action counts in
    ``action_counts``.
    """

    action_counts: tuple[int, ...]
    transition: np.ndarray
    rewards: tuple[np.ndarray, ...]
    discount: float
    terminals: frozenset[int] = field(default_factory=frozenset)
    initial_dist: np.ndarray | None = None

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_players(self) -> int:
        return len(self.action_counts)

    def joint_index(self, actions: tuple[int, ...]) -> int:
        return int(np.ravel_multi_index(actions, self.action_counts))

    def validate(self) -> None:
        P = self.transition
        n_joint = int(np.prod(self.action_counts))
        if P.ndim != 3 or P.shape != (P.shape[0], n_joint, P.shape[0]):
            raise DimensionError(f"transition must be (S, {n_joint}, S), got {P.shape}")
        if not (0.0 <= self.discount < 1.0):
            raise DomainError(f"discount must lie in [0, 1), got {self.discount}")
        if np.any(P < -_ROW_SUM_TOL) or np.max(np.abs(P.sum(axis=2) - 1.0)) > _ROW_SUM_TOL:
            raise ValidationError("transition rows must be stochastic")
        if len(self.rewards) != self.num_players:
            raise DimensionError("one reward tensor per player required")
        for i, R in enumerate(self.rewards):
            if R.shape != P.shape:
                raise DimensionError(f"player {i} reward shape mismatch")
            if not np.all(np.isfinite(R)):
                raise ValidationError(f"player {i} reward has non-finite entries")
        if self.initial_dist is not None:
            rho = self.initial_dist
            if rho.shape != (self.num_states,) or np.any(rho < 0):
                raise ValidationError("initial_dist must be a probability vector")
            if abs(rho.sum() - 1.0) > _ROW_SUM_TOL:
                raise ValidationError("initial_dist must sum to 1 within 1e-12")


@dataclass(frozen=True)
class PotentialTable:
    """Per-state potential values, forced to zero on terminal states."""

    values: np.ndarray

    def check_against(self, mdp_states: int, terminals: frozenset[int]) -> None:
        if self.values.shape != (mdp_states,):
            raise DimensionError(
                f"potential length {self.values.shape} != state count {mdp_states}"
            )
        for s in terminals:
            if self.values[s] != 0.0:
                raise ValidationError(f"potential must be zero at terminal state {s}")


@dataclass(frozen=True)
class Trajectory:
    """Ordered (state, action, reward, next_state) steps; episodic when the
    final next_state is terminal."""

    steps: tuple[tuple[int, int, float, int], ...]

    def __post_init__(self):
        for k in range(len(self.steps) - 1):
            if self.steps[k][3] != self.steps[k + 1][0]:
                raise ValidationError(f"states do not chain at step {k}")

    @property
    def horizon(self) -> int:
        return len(self.steps)


# ---------------------------------------------------------------------------
# Core operations


def q_from_values(mdp: TabularMDP, values: np.ndarray) -> np.ndarray:
    """Q[s, a] = sum_s' P(s'|s,a) (r(s,a,s') + gamma * V(s'))."""
    return np.einsum(
        "ijk,ijk->ij", mdp.transition, mdp.reward + mdp.discount * values[None, None, :]
    )


def value_iteration(
    mdp: TabularMDP,
    tol: float = 1e-12,
    max_iters: int = 200_000,
    tie_tol: float = 1e-9,
) -> tuple[np.ndarray, list[frozenset[int]]]:
    """Solve for the optimal value function by Bellman backups.

    Returns the value vector and, per state, the full *set* of greedy
    actions (everything within ``tie_tol`` of the per-state max), so exact
    ties are preserved rather than collapsed to a single argmax.
    """
    mdp.validate()
    if tol <= 0:
        raise DomainError("tol must be positive")
    V = np.zeros(mdp.num_states)
    for _ in range(max_iters):
        Q = q_from_values(mdp, V)
        V_new = Q.max(axis=1)
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new
    else:
        raise GridkickError(f"value iteration did not converge within {max_iters} iterations")
    Q = q_from_values(mdp, V)
    greedy = [
        frozenset(np.flatnonzero(Q[s] >= Q[s].max() - tie_tol).tolist())
        for s in range(mdp.num_states)
    ]
    return V, greedy


def policy_evaluation(mdp: TabularMDP, policy: tuple[int, ...] | np.ndarray) -> np.ndarray:
    """Exact value of a deterministic policy via a dense linear solve."""
    idx = np.arange(mdp.num_states)
    P_pi = mdp.transition[idx, np.asarray(policy, dtype=int), :]
    r_pi = np.einsum("ij,ij->i", P_pi, mdp.reward[idx, np.asarray(policy, dtype=int), :])
    return np.linalg.solve(np.eye(mdp.num_states) - mdp.discount * P_pi, r_pi)


def shape_mdp(mdp: TabularMDP, phi: PotentialTable) -> TabularMDP:
    """Return a copy of ``mdp`` whose reward is r + gamma*phi(s') - phi(s).

    The input is untouched; phi must vanish on terminals so absorbing
    self-loops keep zero reward.
    """
    phi.check_against(mdp.num_states, mdp.terminals)
    v = phi.values
    shaped = mdp.reward + mdp.discount * v[None, None, :] - v[:, None, None]
    # Terminal self-loops pick up (gamma - 1) * phi(s) == 0; restore exact zeros.
    for s in mdp.terminals:
        shaped[s] = 0.0
    return TabularMDP(
        transition=mdp.transition,
        reward=shaped,
        discount=mdp.discount,
        terminals=mdp.terminals,
        initial_dist=mdp.initial_dist,
    )


def trajectory_return(traj: Trajectory, gamma: float) -> float:
    """Discounted return sum_t gamma^t r_t, accumulated forward in step order."""
    if traj.horizon == 0:
        raise ContractError("trajectory must be nonempty")
    total = 0.0
    scale = 1.0
    for _, _, r, _ in traj.steps:
        total += scale * r
        scale *= gamma
    return total


def shaped_return_identity_check(
    traj: Trajectory, phi: PotentialTable, gamma: float, terminals: frozenset[int]
) -> tuple[float, float, float]:
    """Compare U' against U - phi(s_0) for an episodic trajectory.

    U is the return of the raw rewards and U' the return after adding
    gamma*phi(s') - phi(s) per step. Both are independent forward sums;
    the residual |U' - (U - phi(s_0))| is returned.
    """
    if traj.horizon == 0:
        raise ContractError("trajectory must be nonempty")
    last_next = traj.steps[-1][3]
    if last_next not in terminals:
        raise ContractError("trajectory must end in a terminal state")
    v = phi.values
    u = trajectory_return(traj, gamma)
    shaped_steps = tuple(
        (s, a, r + gamma * v[s2] - v[s], s2) for s, a, r, s2 in traj.steps
    )
    u_shaped = trajectory_return(Trajectory(shaped_steps), gamma)
    residual = abs(u_shaped - (u - v[traj.steps[0][0]]))
    return u, u_shaped, residual


def td_update_equivalence_check(
    mdp: TabularMDP,
    phi: PotentialTable,
    steps: int,
    seed: int,
    alpha: float = 0.1,
) -> float:
    """Drive two tabular TD(0) learners through one shared experience stream.

    Learner A sees raw rewards from value table V0; learner B sees shaped
    rewards from value table V0 - phi. Returns the max over steps of
    |delta_A - delta_B|, which the shaping theory predicts to be zero.
    """
    mdp.validate()
    phi.check_against(mdp.num_states, mdp.terminals)
    rng = np.random.default_rng(seed)
    v = phi.values
    rho = (
        mdp.initial_dist
        if mdp.initial_dist is not None
        else np.full(mdp.num_states, 1.0 / mdp.num_states)
    )
    init = rng.normal(size=mdp.num_states)
    for t in mdp.terminals:
        init[t] = 0.0
    va = init.copy()
    vb = init - v

    s = int(rng.choice(mdp.num_states, p=rho))
    max_dev = 0.0
    for _ in range(steps):
        if s in mdp.terminals:
            s = int(rng.choice(mdp.num_states, p=rho))
            continue
        a = int(rng.integers(mdp.num_actions))
        s2 = int(rng.choice(mdp.num_states, p=mdp.transition[s, a]))
        r = mdp.reward[s, a, s2]
        f = mdp.discount * v[s2] - v[s]
        delta_a = r + mdp.discount * va[s2] - va[s]
        delta_b = r + f + mdp.discount * vb[s2] - vb[s]
        max_dev = max(max_dev, abs(delta_a - delta_b))
        va[s] += alpha * delta_a
        vb[s] += alpha * delta_b
        s = s2
    return max_dev


# ---------------------------------------------------------------------------
# Deterministic Nash enumeration

#: Hard ceiling on (#joint policy profiles * #states) before enumeration is
#: refused. Profiles grow as prod_i A_i^S, so 2 players with 3 states and 2
#: actions each give 64 profiles; the default cap allows roughly 5 states
#: with 3 actions for 2 players.
DEFAULT_PROFILE_CAP = 2_000_000


def _player_policies(game: MarkovGame, player: int):
    return list(itertools.product(range(game.action_counts[player]), repeat=game.num_states))


def game_policy_returns(
    game: MarkovGame, profile: tuple[tuple[int, ...], ...]
) -> np.ndarray:
    """Expected discounted return per player for a deterministic profile,
    weighted by the game's initial distribution."""
    n = game.num_states
    idx = np.arange(n)
    joint = np.array(
        [game.joint_index(tuple(pol[s] for pol in profile)) for s in range(n)]
    )
    P = game.transition[idx, joint, :]
    A = np.eye(n) - game.discount * P
    rho = (
        game.initial_dist
        if game.initial_dist is not None
        else np.full(n, 1.0 / n)
    )
    out = np.empty(game.num_players)
    for i in range(game.num_players):
        r = np.einsum("ij,ij->i", P, game.rewards[i][idx, joint, :])
        out[i] = rho @ np.linalg.solve(A, r)
    return out


def enumerate_deterministic_nash(
    game: MarkovGame,
    tol: float = 1e-9,
    cap: int = DEFAULT_PROFILE_CAP,
) -> set[tuple[tuple[int, ...], ...]]:
    """Exhaustively enumerate deterministic stationary Nash profiles.

    A profile survives when no player has a deterministic unilateral
    deviation improving its expected discounted return by more than
    ``tol``. Raises :class:`EnumerationCapError` when the profile count
    times the state count exceeds ``cap``.
    """
    game.validate()
    policy_sets = [_player_policies(game, i) for i in range(game.num_players)]
    counts = [len(ps) for ps in policy_sets]
    total = int(np.prod(counts)) * game.num_states
    if total > cap:
        raise EnumerationCapError(
            f"enumeration needs {total} profile-state evaluations > cap {cap}"
        )

    returns = np.empty(tuple(counts) + (game.num_players,))
    for combo in itertools.product(*(range(c) for c in counts)):
        profile = tuple(policy_sets[i][combo[i]] for i in range(game.num_players))
        returns[combo] = game_policy_returns(game, profile)

    nash: set[tuple[tuple[int, ...], ...]] = set()
    for combo in itertools.product(*(range(c) for c in counts)):
        stable = True
        for i in range(game.num_players):
            base = returns[combo][i]
            for alt in range(counts[i]):
                if alt == combo[i]:
                    continue
                dev = combo[:i] + (alt,) + combo[i + 1 :]
                if returns[dev][i] > base + tol:
                    stable = False
                    break
            if not stable:
                break
        if stable:
            nash.add(tuple(policy_sets[i][combo[i]] for i in range(game.num_players)))
    return nash


def shape_game_players(
    game: MarkovGame, potentials: dict[int, PotentialTable]
) -> MarkovGame:
    """Shape a subset of players' rewards with per-player state potentials."""
    new_rewards = list(game.rewards)
    for i, phi in potentials.items():
        phi.check_against(game.num_states, game.terminals)
        v = phi.values
        new_rewards[i] = game.rewards[i] + game.discount * v[None, None, :] - v[:, None, None]
    return MarkovGame(
        action_counts=game.action_counts,
        transition=game.transition,
        rewards=tuple(new_rewards),
        discount=game.discount,
        terminals=game.terminals,
        initial_dist=game.initial_dist,
    )


# ---------------------------------------------------------------------------
# Random instance generators (seeded; used by property sweeps and `verify`)


def random_mdp(
    rng: np.random.Generator,
    num_states: int,
    num_actions: int,
    discount: float = 0.9,
    num_terminals: int = 0,
) -> TabularMDP:
    """Random dense MDP: Dirichlet rows, rewards uniform in [-1, 1]."""
    P = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    R = rng.uniform(-1.0, 1.0, size=(num_states, num_actions, num_states))
    terminals = frozenset(rng.choice(num_states, size=num_terminals, replace=False).tolist())
    for s in terminals:
        P[s] = 0.0
        P[s, :, s] = 1.0
        R[s] = 0.0
    rho = rng.dirichlet(np.ones(num_states))
    return TabularMDP(P, R, discount, terminals, rho)


def random_episodic_mdp(
    rng: np.random.Generator,
    num_states: int,
    num_actions: int,
    discount: float = 0.9,
    terminal_pull: float = 0.15,
) -> TabularMDP:
    """Random MDP with one absorbing terminal reachable from everywhere.

    Every non-terminal transition row mixes ``terminal_pull`` probability
    into the terminal state so uniform-random episodes end quickly.
    """
    mdp = random_mdp(rng, num_states, num_actions, discount, num_terminals=1)
    term = next(iter(mdp.terminals))
    P = mdp.transition.copy()
    for s in range(num_states):
        if s == term:
            continue
        P[s] = (1.0 - terminal_pull) * P[s]
        P[s, :, term] += terminal_pull
    return TabularMDP(P, mdp.reward, discount, mdp.terminals, mdp.initial_dist)


def random_potential(rng: np.random.Generator, mdp: TabularMDP) -> PotentialTable:
    """Uniform [-1, 1] potential, zeroed on terminal states."""
    v = rng.uniform(-1.0, 1.0, size=mdp.num_states)
    for s in mdp.terminals:
        v[s] = 0.0
    return PotentialTable(v)


def sample_trajectory(
    mdp: TabularMDP, rng: np.random.Generator, max_len: int = 2000
) -> Trajectory:
    """Roll a uniform-random policy until a terminal state is reached."""
    rho = (
        mdp.initial_dist
        if mdp.initial_dist is not None
        else np.full(mdp.num_states, 1.0 / mdp.num_states)
    )
    s = int(rng.choice(mdp.num_states, p=rho))
    while s in mdp.terminals:
        s = int(rng.choice(mdp.num_states, p=rho))
    steps = []
    for _ in range(max_len):
        a = int(rng.integers(mdp.num_actions))
        s2 = int(rng.choice(mdp.num_states, p=mdp.transition[s, a]))
        steps.append((s, a, float(mdp.reward[s, a, s2]), s2))
        s = s2
        if s in mdp.terminals:
            return Trajectory(tuple(steps))
    raise GridkickError(f"no terminal reached within {max_len} steps")


def random_markov_game(
    rng: np.random.Generator,
    num_states: int,
    action_counts: tuple[int, ...],
    discount: float = 0.9,
) -> MarkovGame:
    """Random dense n-player game: Dirichlet transitions, uniform rewards."""
    n_joint = int(np.prod(action_counts))
    P = rng.dirichlet(np.ones(num_states), size=(num_states, n_joint))
    rewards = tuple(
        rng.uniform(-1.0, 1.0, size=(num_states, n_joint, num_states))
        for _ in action_counts
    )
    rho = rng.dirichlet(np.ones(num_states))
    return MarkovGame(tuple(action_counts), P, rewards, discount, frozenset(), rho)


def matrix_game(payoffs: np.ndarray, discount: float = 0.9) -> MarkovGame:
    """Repeated bimatrix game as a single-state discounted Markov game.

    ``payoffs[a1, a2]`` holds the (player1, player2) stage payoffs.
    """
    a1, a2, two = payoffs.shape
    if two != 2:
        raise DimensionError("payoffs must be (A1, A2, 2)")
    n_joint = a1 * a2
    P = np.ones((1, n_joint, 1))
    r1 = payoffs[:, :, 0].reshape(1, n_joint, 1)
    r2 = payoffs[:, :, 1].reshape(1, n_joint, 1)
    return MarkovGame((a1, a2), P, (r1, r2), discount, frozenset(), np.array([1.0]))

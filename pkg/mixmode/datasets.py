"""
Dataset generators:
- the inverse sine regression problem, unimodal at the edges and
  multimodal in the middle,
- a low dimensional latent environment whose transitions are unimodal when
  the action is known, and multimodal (one mode per possible action) when the
  action is masked.
"""
import csv
import os
from dataclasses import dataclass, field

import numpy as np

from mixmode import ACTIONS, LABELS, InvalidArgument, FormatVersionError
from mixmode.utils import write_json, read_json
from mixmode.version import FORMAT_VERSION

__all__ = ('Dataset', 'TransitionSample', 'LatentShiftEnv', 'VALID_ACTIONS',
           'ACTION_TOKENS', 'gen_inverse_sine', 'env_step', 'gen_transitions',
           'encode_action', 'transitions_to_dataset', 'split_by_label',
           'save_dataset', 'save_transitions', 'load_dataset')

# the 4 actions driving the dynamics, and the tokens seen by the MDN (the
# invalid MASKED action is a fifth one-hot category)
VALID_ACTIONS = (ACTIONS.LEFT, ACTIONS.RIGHT, ACTIONS.JUMP, ACTIONS.NOOP)
ACTION_TOKENS = VALID_ACTIONS + (ACTIONS.MASKED, )

INVERSE_SINE = 'inverse-sine'
LATENT_ENV = 'latent-env'


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs[:, None]
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        if not len(self.inputs) or len(self.inputs) != len(self.targets):
            raise InvalidArgument('A dataset needs as many inputs as targets, and at least one')

    def __len__(self):
        return len(self.inputs)


def gen_inverse_sine(n=3000, seed=0, noise_std=1.0):
    """
    ``n`` points t linearly spaced in [-10, 10], y = t + 7 sin(0.7 t) + noise
    with noise ~ N(0, noise_std^2), then the roles are exchanged: inputs are
    the noisy y, targets are t.
    """
    if n < 1:
        raise InvalidArgument('Cannot generate %s points' % n)
    rng = np.random.default_rng(seed)
    t = np.linspace(-10.0, 10.0, n)
    y = t + 7.0 * np.sin(0.7 * t) + noise_std * rng.standard_normal(n)
    meta = {'generator': INVERSE_SINE, 'n': n, 'seed': seed, 'noise_std': noise_std}
    return Dataset(y[:, None], t[:, None], meta)


@dataclass(frozen=True, eq=False)
class TransitionSample:
    sample_id: int
    state: np.ndarray
    action_token: str
    next_state: np.ndarray
    label: str

    def __post_init__(self):
        if self.action_token not in ACTION_TOKENS:
            raise InvalidArgument('Unknown action token "%s"' % self.action_token)
        masked = self.action_token == ACTIONS.MASKED
        if masked != (self.label == LABELS.MULTIMODAL):
            raise InvalidArgument('A transition is multimodal if and only if its action is masked')


@dataclass
class LatentShiftEnv:
    """
    A deterministic shift environment in a ``d_latent`` dimensional latent
    space: each action adds a fixed offset to the state, plus a small gaussian
    observation noise, and the result is clamped to the state box.
    """
    d_latent: int = 8
    action_offsets: dict = None
    state_low: float = -20.0
    state_high: float = 20.0
    observation_noise_std: float = 0.05
    # half width of the box where trajectories start
    start_spread: float = 2.0
    shift: float = 2.0

    MIN_OFFSET_DISTANCE = 1.0

    def __post_init__(self):
        if self.d_latent < 2:
            raise InvalidArgument('The latent environment needs at least 2 dimensions')
        if self.action_offsets is None:
            self.action_offsets = self.default_offsets(self.d_latent, self.shift)
        offsets = dict((action, np.asarray(self.action_offsets[action], dtype=float))
                       for action in VALID_ACTIONS)
        for offset in offsets.values():
            if offset.shape != (self.d_latent, ):
                raise InvalidArgument('Offsets must have dimension %d' % self.d_latent)
        self.action_offsets = offsets
        if self.min_offset_distance() < self.MIN_OFFSET_DISTANCE:
            raise InvalidArgument('Action offsets must be at least %s apart'
                                  % self.MIN_OFFSET_DISTANCE)
        if not self.state_high > self.state_low:
            raise InvalidArgument('Invalid state box')
        if self.observation_noise_std < 0:
            raise InvalidArgument('observation_noise_std must be positive (or 0)')

    @staticmethod
    def default_offsets(d_latent, shift=2.0):
        """
        LEFT and RIGHT move along the first coordinate, JUMP along the second
        one, NOOP does not move
        """
        offsets = dict((action, np.zeros(d_latent)) for action in VALID_ACTIONS)
        offsets[ACTIONS.LEFT][0] = -shift
        offsets[ACTIONS.RIGHT][0] = shift
        offsets[ACTIONS.JUMP][1] = shift
        return offsets

    def min_offset_distance(self):
        offsets = [self.action_offsets[action] for action in VALID_ACTIONS]
        return min(np.linalg.norm(a - b)
                   for index, a in enumerate(offsets) for b in offsets[index + 1:])

    def to_dict(self):
        return {
            'd_latent': self.d_latent,
            'action_offsets': dict((action, offset.tolist())
                                   for action, offset in self.action_offsets.items()),
            'state_low': self.state_low,
            'state_high': self.state_high,
            'observation_noise_std': self.observation_noise_std,
            'start_spread': self.start_spread,
        }

    def initial_state(self, rng):
        return rng.uniform(-self.start_spread, self.start_spread, size=self.d_latent)


def env_step(env, state, action, rng=None):
    """
    Return the state following ``state`` when ``action`` is played.
    ``rng`` is the source of the observation noise (needed if the noise std
    is not 0).
    """
    if action == ACTIONS.MASKED:
        raise InvalidArgument('The masked action cannot drive the dynamics')
    if action not in env.action_offsets:
        raise InvalidArgument('Unknown action "%s"' % action)
    state = np.asarray(state, dtype=float)
    next_state = state + env.action_offsets[action]
    if env.observation_noise_std:
        next_state = next_state + env.observation_noise_std * rng.standard_normal(env.d_latent)
    return np.clip(next_state, env.state_low, env.state_high)


def _action_probabilities(probabilities):
    if probabilities is None:
        return np.full(len(VALID_ACTIONS), 1.0 / len(VALID_ACTIONS))
    probabilities = np.asarray(probabilities, dtype=float)
    if probabilities.shape != (len(VALID_ACTIONS), ) or np.any(probabilities < 0) \
            or not probabilities.sum() > 0:
        raise InvalidArgument('Action probabilities must be 4 non negative numbers')
    return probabilities / probabilities.sum()


def gen_transitions(env, n, mask_fraction=0.5, seed=0, trajectory_length=20,
                    action_probabilities=None, id_offset=0):
    """
    Roll out trajectories with random valid actions and return ``n``
    TransitionSample. In each trajectory the first steps are masked: their
    action token is MASKED and their label MULTIMODAL (the true action still
    drove the dynamics). The masked steps are apportioned so that exactly
    round(mask_fraction * n) samples are masked overall.
    Sample ids are ``id_offset + index``.
    """
    if n < 1:
        raise InvalidArgument('Cannot generate %s transitions' % n)
    if not 0 <= mask_fraction <= 1:
        raise InvalidArgument('mask_fraction must be in [0, 1]')
    if trajectory_length < 1:
        raise InvalidArgument('trajectory_length must be positive')
    probabilities = _action_probabilities(action_probabilities)
    rng = np.random.default_rng(seed)

    samples = []
    for start in range(0, n, trajectory_length):
        end = min(start + trajectory_length, n)
        n_masked = int(round(mask_fraction * end)) - int(round(mask_fraction * start))
        state = env.initial_state(rng)
        for step in range(end - start):
            action = VALID_ACTIONS[rng.choice(len(VALID_ACTIONS), p=probabilities)]
            next_state = env_step(env, state, action, rng)
            masked = step < n_masked
            samples.append(TransitionSample(
                sample_id=id_offset + start + step,
                state=state,
                action_token=ACTIONS.MASKED if masked else action,
                next_state=next_state,
                label=LABELS.MULTIMODAL if masked else LABELS.UNIMODAL,
            ))
            state = next_state
    return samples


def encode_action(token):
    """
    One-hot encoding of an action token, MASKED included
    """
    encoded = np.zeros(len(ACTION_TOKENS))
    encoded[ACTION_TOKENS.index(token)] = 1.0
    return encoded


def transitions_to_dataset(samples, meta=None, residual=False):
    """
    Inputs are state + one-hot action token, targets are the next states, or
    the displacements next_state - state if ``residual`` is True
    """
    inputs = np.array([np.concatenate([sample.state, encode_action(sample.action_token)])
                       for sample in samples])
    targets = np.array([sample.next_state for sample in samples])
    if residual:
        targets = targets - np.array([sample.state for sample in samples])
    return Dataset(inputs, targets, dict(meta or {}))


def split_by_label(samples):
    """
    Return a dict label -> list of samples
    """
    split = dict((label, []) for label in LABELS.values())
    for sample in samples:
        split[sample.label].append(sample)
    return split


def _sidecar(filename):
    return os.path.splitext(filename)[0] + '.json'


def save_dataset(dataset, filename):
    """
    Write a regression dataset as csv (input_*, target_* columns) and its
    metadata in a json sidecar
    """
    with open(filename, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['input_%d' % i for i in range(dataset.inputs.shape[1])]
                        + ['target_%d' % i for i in range(dataset.targets.shape[1])])
        for x, y in zip(dataset.inputs, dataset.targets):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in y])
    meta = dict(dataset.meta, format_version=FORMAT_VERSION, kind='regression',
                rows=len(dataset))
    write_json(_sidecar(filename), meta)


def save_transitions(samples, filename, meta=None):
    """
    Write transitions as csv (sample_id, state_*, action, next_state_*, label)
    and the generator metadata in a json sidecar
    """
    d = len(samples[0].state)
    with open(filename, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['sample_id'] + ['state_%d' % i for i in range(d)] + ['action']
                        + ['next_state_%d' % i for i in range(d)] + ['label'])
        for sample in samples:
            writer.writerow([sample.sample_id] + [repr(float(v)) for v in sample.state]
                            + [sample.action_token]
                            + [repr(float(v)) for v in sample.next_state] + [sample.label])
    meta = dict(meta or {}, format_version=FORMAT_VERSION, kind='transitions',
                rows=len(samples))
    write_json(_sidecar(filename), meta)


def load_dataset(filename):
    """
    Load a csv written by ``save_dataset`` or ``save_transitions`` as a
    Dataset ready for training. Transitions get a ``labels`` entry in meta.
    """
    sidecar = _sidecar(filename)
    meta = read_json(sidecar) if os.path.exists(sidecar) else {}
    if meta.get('format_version', FORMAT_VERSION) != FORMAT_VERSION:
        raise FormatVersionError('Dataset format version %s is not supported'
                                 % meta.get('format_version'))
    with open(filename, newline='') as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = list(reader)
    if not rows:
        raise InvalidArgument('Empty dataset %s' % filename)

    if 'action' in header:
        d = sum(1 for name in header if name.startswith('state_'))
        samples = [TransitionSample(
            sample_id=int(row[0]),
            state=np.array(row[1:1 + d], dtype=float),
            action_token=row[1 + d],
            next_state=np.array(row[2 + d:2 + 2 * d], dtype=float),
            label=row[2 + 2 * d],
        ) for row in rows]
        dataset = transitions_to_dataset(samples, meta)
        dataset.meta['labels'] = [sample.label for sample in samples]
        dataset.meta['sample_ids'] = [sample.sample_id for sample in samples]
        return dataset

    n_inputs = sum(1 for name in header if name.startswith('input_'))
    values = np.array(rows, dtype=float)
    return Dataset(values[:, :n_inputs], values[:, n_inputs:], meta)

import numpy as np

from pairlab.errors import ArgumentError

# Stream tags. Every generator draws from its own tagged family of streams.
kGaussianStream = 1
kNoiseStream = 2
kPhantomStream = 3
kMaskStream = 4
kInitStream = 5
kShuffleStream = 6
kEnsembleStream = 7
kPairStream = 8
kSplitStream = 9


def get_stream(seed: int, *keys: int) -> np.random.Generator:
    entropy = [int(seed)] + [int(k) for k in keys]
    if any(e < 0 for e in entropy):
        raise ArgumentError(f"stream keys must be nonnegative, got {entropy}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def get_random_matrix(rows: int, cols: int, seed: int = 0) -> np.ndarray:
    return get_stream(seed).standard_normal((rows, cols))


def get_random_vector(n: int, seed: int = 0) -> np.ndarray:
    return get_stream(seed).standard_normal(n)


def get_random_spd(n: int, seed: int = 0, shift: float = 1.0) -> np.ndarray:
    B = get_random_matrix(n, n, seed)
    G = B.T @ B + shift * np.eye(n)
    return 0.5 * (G + G.T)


def get_random_orthonormal(rows: int, cols: int, seed: int = 0) -> np.ndarray:
    Q, _ = np.linalg.qr(get_random_matrix(rows, cols, seed))
    return Q


def derive_seed(seed: int, *keys: int) -> int:
    entropy = [int(seed)] + [int(k) for k in keys]
    if any(e < 0 for e in entropy):
        raise ArgumentError(f"stream keys must be nonnegative, got {entropy}")
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])

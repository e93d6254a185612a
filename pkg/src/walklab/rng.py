"""Counter-free 64-bit generators shared bit-for-bit with the compiled kernels.

Trajectory ``i`` of an ensemble seeded with ``master`` uses
``xoshiro256**`` whose state is filled from a splitmix64 stream started at
``mix64(master ^ (i * GOLDEN))``.  Both kernel implementations reproduce the
same integer sequence, so a trajectory is a pure function of ``(master, i)``.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
INV_2_53 = 1.0 / 9007199254740992.0


def mix64(z):
    """splitmix64 finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trajectory_seed(master_seed, index):
    return mix64((master_seed & MASK64) ^ ((index * GOLDEN) & MASK64))


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** with splitmix64 seeding."""

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, seed):
        x = seed & MASK64
        state = []
        for _ in range(4):
            x = (x + GOLDEN) & MASK64
            state.append(mix64(x))
        self.s0, self.s1, self.s2, self.s3 = state

    @classmethod
    def for_trajectory(cls, master_seed, index):
        return cls(trajectory_seed(master_seed, index))

    def next_u64(self):
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return result

    def random(self):
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * INV_2_53

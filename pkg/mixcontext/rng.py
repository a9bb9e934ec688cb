"""
Детерминированный генератор splitmix64.

Все перемешивания пакета (сплиты, порядок батчей, синтетический корпус)
идут через этот генератор, чтобы результаты воспроизводились в любой
реализации, знающей рекуррентность:

    state = state + 0x9E3779B97F4A7C15             (mod 2**64)
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9       (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB       (mod 2**64)
    out = z ^ (z >> 31)

`below(n)` отбрасывает значения из неполного хвоста диапазона, поэтому
распределение равномерное. `shuffle` — Фишер–Йетс от последнего элемента.
"""

from typing import Sequence, TypeVar

T = TypeVar("T")

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """splitmix64 с удобными методами выборки."""

    def __init__(self, seed: int) -> None:
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Равномерное целое из [0, n)."""
        if n <= 0:
            raise ValueError(f"below(n) требует n > 0, получено {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            value = self.next_u64()
            if value < limit:
                return value % n

    def uniform(self) -> float:
        # 53 старших бита -> double из [0, 1)
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def chance(self, probability: float) -> bool:
        return self.uniform() < probability

    def between(self, low: int, high: int) -> int:
        """Целое из [low, high] включительно."""
        return low + self.below(high - low + 1)

    def choice(self, items: Sequence[T]) -> T:
        if not items:
            raise ValueError("choice() из пустой последовательности")
        return items[self.below(len(items))]

    def shuffle(self, items: list) -> list:
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def sample(self, items: Sequence[T], k: int) -> list[T]:
        pool = list(items)
        self.shuffle(pool)
        return pool[:k]

    def fork(self, tag: int) -> "SplitMix64":
        """Независимый поток для подзадачи (например, отдельной эпохи)."""
        return SplitMix64(self.next_u64() ^ ((int(tag) * GOLDEN_GAMMA) & MASK64))

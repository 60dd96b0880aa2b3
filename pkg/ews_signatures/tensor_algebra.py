"""Truncated tensor algebra over R^w.

Elements are stored level by level: level k is a dense array of shape (w,)*k in
row-major multi-index order, so word (i1, ..., ik) sits at index (i1-1, ..., ik-1).
Flattening is grade-lexicographic: level-major, then lexicographic with the
leftmost letter most significant.

Most operations have a private "flat" twin working on lists of arrays shaped
(..., w**k) with arbitrary leading batch axes. The engine uses those to process
many segments at once.
"""

import json
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from math import factorial
from numbers import Real
from typing import Any, Dict, Iterator, List, Mapping, Sequence, Tuple, Union

import numpy as np

from .utils import _as_float_array, _check_positive_int, _word_label

Word = Tuple[int, ...]
FlatLevels = List[np.ndarray]


def total_dimension(dim: int, depth: int) -> int:
    """Number of coefficients D = 1 + w + ... + w**depth of a truncated tensor."""
    return sum(dim**k for k in range(depth + 1))


def words(dim: int, depth: int) -> Iterator[Word]:
    """Yields every word of length <= depth in flattening order, starting with the empty word."""
    for k in range(depth + 1):
        yield from product(range(1, dim + 1), repeat=k)


def word_labels(dim: int, depth: int) -> List[str]:
    """Labels such as "()", "(1)", "(1,2)" for the flattened coefficients, in flattening order."""
    return [_word_label(w) for w in words(dim, depth)]


def word_index(word: Sequence[int], dim: int) -> int:
    """Position of `word` in the flattened vector.

    Raises:
        ValueError: If a letter is outside 1..dim.
    """
    index = 0
    for letter in word:
        if not 1 <= letter <= dim:
            raise ValueError(f"Letter {letter} of word {tuple(word)} is outside 1..{dim}")
        index = index * dim + (letter - 1)
    return total_dimension(dim, len(word) - 1) + index if word else 0


# -----------------------
# TruncatedTensor
# -----------------------


@dataclass(frozen=True, eq=False)
class TruncatedTensor:
    """An element of the truncated tensor algebra T^depth(R^dim).

    Args:
        dim: Channel dimension w.
        depth: Truncation depth n.
        levels: n+1 arrays. Level k may be given with shape (w,)*k or flat with w**k entries.
    """

    dim: int
    depth: int
    levels: Tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self) -> None:
        _check_positive_int(self.dim, "dim")
        _check_positive_int(self.depth, "depth", minimum=0)
        if len(self.levels) != self.depth + 1:
            raise ValueError(
                f"Expected {self.depth + 1} levels for depth {self.depth}, but received {len(self.levels)}"
            )
        shaped = []
        for k, level in enumerate(self.levels):
            array = _as_float_array(level, f"levels[{k}]")
            if array.size != self.dim**k:
                raise ValueError(
                    f"Level {k} must have {self.dim ** k} coefficients, but has {array.size}"
                )
            array = array.reshape((self.dim,) * k)
            array.setflags(write=False)
            shaped.append(array)
        object.__setattr__(self, "levels", tuple(shaped))

    @classmethod
    def unit(cls, dim: int, depth: int) -> "TruncatedTensor":
        """The unit element (1, 0, ..., 0)."""
        return cls(dim, depth, tuple(_identity_flat((), dim, depth)))

    @classmethod
    def zeros(cls, dim: int, depth: int) -> "TruncatedTensor":
        """The zero element, level 0 included."""
        return cls(dim, depth, tuple(np.zeros(dim**k) for k in range(depth + 1)))

    @classmethod
    def from_json(cls, obj: Union[str, Mapping[str, Any]]) -> "TruncatedTensor":
        """Builds a tensor from its JSON form {dim, depth, levels}, given as text or a parsed dict."""
        if isinstance(obj, str):
            obj = json.loads(obj)
        missing = {"dim", "depth", "levels"} - set(obj)
        if missing:
            raise ValueError(f"Tensor JSON is missing keys: {sorted(missing)}")
        return cls(int(obj["dim"]), int(obj["depth"]), tuple(obj["levels"]))

    def to_json(self) -> Dict[str, Any]:
        """JSON-ready dict with each level flattened row-major. Serialize with utils._to_json_text for 17 digits."""
        return {
            "dim": self.dim,
            "depth": self.depth,
            "levels": [level.reshape(-1).tolist() for level in self.levels],
        }

    def flat_levels(self) -> FlatLevels:
        """Each level as a flat row-major vector of w**k entries."""
        return [level.reshape(-1) for level in self.levels]

    def flatten(self) -> np.ndarray:
        """All coefficients in one vector of length D = 1 + w + ... + w**n, level by level."""
        return flatten(self)

    def coefficient(self, word: Sequence[int]) -> float:
        """Coefficient of a word with 1-based letters.

        Args:
            word: Letters in 1..dim. The empty word reads level 0.

        Returns:
            The coefficient as a float.

        Raises:
            ValueError: If the word is longer than the depth or a letter is out of range.
        """
        word = tuple(word)
        if len(word) > self.depth:
            raise ValueError(
                f"Word {word} is longer than the tensor depth {self.depth}"
            )
        for letter in word:
            if not 1 <= letter <= self.dim:
                raise ValueError(f"Letter {letter} of word {word} is outside 1..{self.dim}")
        return float(self.levels[len(word)][tuple(letter - 1 for letter in word)])

    def truncate(self, depth: int) -> "TruncatedTensor":
        """Drops the levels above `depth`.

        Args:
            depth: New depth, at most the current one.

        Returns:
            The projection onto T^depth.

        Raises:
            ValueError: If `depth` exceeds the current depth.
        """
        if depth > self.depth:
            raise ValueError(f"Cannot truncate depth {self.depth} tensor to depth {depth}")
        return TruncatedTensor(self.dim, depth, self.levels[: depth + 1])


# -----------------------
# Batched kernels on flat levels
# -----------------------


def _identity_flat(batch_shape: Tuple[int, ...], dim: int, depth: int) -> FlatLevels:
    levels = [np.ones(batch_shape + (1,))]
    levels += [np.zeros(batch_shape + (dim**k,)) for k in range(1, depth + 1)]
    return levels


def _concat_flat(a: FlatLevels, b: FlatLevels, depth: int) -> FlatLevels:
    """Truncated tensor product c_k = sum_j a_j (x) b_(k-j), broadcast over leading axes."""
    out = []
    for k in range(depth + 1):
        total = None
        for j in range(k + 1):
            left, right = a[j], b[k - j]
            term = (left[..., :, None] * right[..., None, :]).reshape(
                np.broadcast_shapes(left.shape[:-1], right.shape[:-1])
                + (left.shape[-1] * right.shape[-1],)
            )
            total = term if total is None else total + term
        out.append(total)
    return out


def _exp_flat(v: np.ndarray, depth: int) -> FlatLevels:
    """Classical signature of straight chords v (shape (..., w)): level k is v^(x)k / k!."""
    levels = [np.ones(v.shape[:-1] + (1,))]
    for k in range(1, depth + 1):
        previous = levels[-1]
        levels.append(
            (previous[..., :, None] * v[..., None, :]).reshape(v.shape[:-1] + (-1,)) / k
        )
    return levels


def _tree_concat_flat(levels: FlatLevels, depth: int) -> FlatLevels:
    """Concatenates a sequence along axis -2 (..., M, w**k) left to right with a balanced pairwise tree."""
    while levels[0].shape[-2] > 1:
        count = levels[0].shape[-2]
        pairs = count // 2
        left = [level[..., 0 : 2 * pairs : 2, :] for level in levels]
        right = [level[..., 1 : 2 * pairs : 2, :] for level in levels]
        merged = _concat_flat(left, right, depth)
        if count % 2:
            merged = [
                np.concatenate([m, level[..., -1:, :]], axis=-2)
                for m, level in zip(merged, levels)
            ]
        levels = merged
    return [level[..., 0, :] for level in levels]


# -----------------------
# Public operations
# -----------------------


def _check_same_dim(a: TruncatedTensor, b: TruncatedTensor) -> None:
    if a.dim != b.dim:
        raise ValueError(
            f"Tensor dimensions differ: left has dim {a.dim}, right has dim {b.dim}"
        )


def concat_product(
    a: TruncatedTensor, b: TruncatedTensor, depth: Union[int, None] = None
) -> TruncatedTensor:
    """Concatenation (tensor) product of two truncated tensors.

    Args:
        a: Left factor.
        b: Right factor.
        depth: Truncation depth of the result. Defaults to the smaller of the two depths.

    Returns:
        The product truncated at `depth`.

    Raises:
        ValueError: If dimensions differ or `depth` exceeds a factor's depth.
    """
    _check_same_dim(a, b)
    depth = min(a.depth, b.depth) if depth is None else depth
    if depth > min(a.depth, b.depth):
        raise ValueError(
            f"Product depth {depth} exceeds factor depths {a.depth} and {b.depth}"
        )
    return TruncatedTensor(
        a.dim, depth, tuple(_concat_flat(a.flat_levels(), b.flat_levels(), depth))
    )


def tensor_exp(v: Any, depth: int) -> TruncatedTensor:
    """Tensor exponential (1, v, v(x)v/2!, ...) of a vector: the signature of a straight chord."""
    v = _as_float_array(v, "v", ndim=1)
    return TruncatedTensor(v.size, depth, tuple(_exp_flat(v, depth)))


def flatten(s: TruncatedTensor) -> np.ndarray:
    """Grade-lexicographic flattening into a vector of length D = sum_k w**k."""
    return np.concatenate(s.flat_levels())


def unflatten(vector: Any, dim: int, depth: int) -> TruncatedTensor:
    """Inverse of flatten.

    Raises:
        ValueError: If the vector length is not sum_k dim**k.
    """
    vector = _as_float_array(vector, "vector", ndim=1)
    size = total_dimension(dim, depth)
    if vector.size != size:
        raise ValueError(
            f"Expected a vector of length {size} for dim {dim} and depth {depth}, but received length {vector.size}"
        )
    bounds = np.cumsum([0] + [dim**k for k in range(depth + 1)])
    return TruncatedTensor(
        dim, depth, tuple(vector[bounds[k] : bounds[k + 1]] for k in range(depth + 1))
    )


def level_norms(s: TruncatedTensor) -> np.ndarray:
    """Frobenius norm of each level."""
    return np.array([np.linalg.norm(level.reshape(-1)) for level in s.levels])


# -----------------------
# Dual elements and the shuffle product
# -----------------------


@lru_cache(maxsize=4096)
def _shuffle_words(u: Word, v: Word) -> Tuple[Tuple[Word, int], ...]:
    """Multiset of shuffles of u and v with integer multiplicities.

    Uses the last-letter recursion ua ⧢ vb = (ua ⧢ v)b + (u ⧢ vb)a.
    """
    if not u:
        return ((v, 1),)
    if not v:
        return ((u, 1),)
    counts: Counter = Counter()
    for w, n in _shuffle_words(u, v[:-1]):
        counts[w + v[-1:]] += n
    for w, n in _shuffle_words(u[:-1], v):
        counts[w + u[-1:]] += n
    return tuple(sorted(counts.items()))


def shuffle_words(u: Sequence[int], v: Sequence[int]) -> Dict[Word, int]:
    """Shuffle of two words, as a dict from word to its number of shuffles."""
    return dict(_shuffle_words(tuple(u), tuple(v)))


@dataclass(frozen=True, eq=False)
class DualElement:
    """A linear functional on the tensor algebra: a finite combination of words.

    Coefficients keep their Python type, so integer inputs stay exact through shuffle products.

    Args:
        dim: Alphabet size w.
        terms: Map from word (tuple of 1-based letters) to coefficient.
    """

    dim: int
    terms: Mapping[Word, Real] = field(default_factory=dict)

    def __post_init__(self) -> None:
        _check_positive_int(self.dim, "dim")
        clean: Dict[Word, Real] = {}
        for word, coefficient in self.terms.items():
            word = tuple(int(letter) for letter in word)
            for letter in word:
                if not 1 <= letter <= self.dim:
                    raise ValueError(
                        f"Letter {letter} of word {word} is outside 1..{self.dim}"
                    )
            if coefficient != 0:
                clean[word] = coefficient
        object.__setattr__(self, "terms", clean)

    @property
    def max_length(self) -> int:
        """Length of the longest word with a nonzero coefficient, or -1 for the zero functional."""
        return max((len(word) for word in self.terms), default=-1)

    def _check_alphabet(self, other: "DualElement") -> None:
        if self.dim != other.dim:
            raise ValueError(
                f"Alphabet sizes differ: {self.dim} and {other.dim}"
            )

    def __add__(self, other: "DualElement") -> "DualElement":
        self._check_alphabet(other)
        terms = dict(self.terms)
        for word, coefficient in other.terms.items():
            terms[word] = terms.get(word, 0) + coefficient
        return DualElement(self.dim, terms)

    def __neg__(self) -> "DualElement":
        return DualElement(self.dim, {w: -c for w, c in self.terms.items()})

    def __sub__(self, other: "DualElement") -> "DualElement":
        return self + (-other)

    def __mul__(self, scalar: Real) -> "DualElement":
        if not isinstance(scalar, Real):
            return NotImplemented
        return DualElement(self.dim, {w: scalar * c for w, c in self.terms.items()})

    __rmul__ = __mul__

    def __repr__(self) -> str:
        if not self.terms:
            return "DualElement(0)"
        body = " + ".join(f"{c}·{_word_label(w)}" for w, c in self.terms.items())
        return f"DualElement({body})"


def word(letters: Sequence[int], dim: int, coefficient: Real = 1) -> DualElement:
    """The functional coefficient·(letters); an empty sequence gives the empty word."""
    return DualElement(dim, {tuple(letters): coefficient})


def shuffle_product(l1: DualElement, l2: DualElement) -> DualElement:
    """Bilinear extension of the shuffle of words.

    Raises:
        ValueError: If the alphabets differ.
    """
    l1._check_alphabet(l2)
    terms: Dict[Word, Real] = {}
    for u, a in l1.terms.items():
        for v, b in l2.terms.items():
            for w, n in _shuffle_words(u, v):
                terms[w] = terms.get(w, 0) + a * b * n
    return DualElement(l1.dim, terms)


def shuffle_power(l: DualElement, k: int) -> DualElement:
    """k-fold shuffle power of l. The 0th power is the empty word."""
    _check_positive_int(k, "k", minimum=0)
    result = word((), l.dim)
    for _ in range(k):
        result = shuffle_product(result, l)
    return result


def pair(l: DualElement, s: TruncatedTensor) -> float:
    """Pairing <l, s> = sum over words of coefficient times tensor coefficient.

    Raises:
        ValueError: If a word is longer than s.depth or uses letters beyond s.dim.
    """
    if l.dim > s.dim:
        raise ValueError(f"Functional alphabet {l.dim} exceeds tensor dimension {s.dim}")
    if l.max_length > s.depth:
        raise ValueError(
            f"Functional has words of length {l.max_length}, but the tensor depth is {s.depth}"
        )
    return float(sum(float(c) * s.coefficient(w) for w, c in l.terms.items()))


def exp_factorial_bound(length: float, depth: int) -> np.ndarray:
    """Per-level bounds length**k / k! on the signature of a path of the given 1-variation."""
    return np.array([length**k / factorial(k) for k in range(depth + 1)])

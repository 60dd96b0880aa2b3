"""
This module installs the `.ews` accessor on the Pandas DataFrame class.

Don't use anything in this module directly. Just `import ews_signatures`, and frames whose first column is a clock `t` followed by channel columns gain EWS methods:

    ```
    import pandas as pd
    import ews_signatures

    df = pd.DataFrame({"t": [0.0, 0.5, 1.0], "x": [0.0, 1.0, 0.5]})
    df.ews.signature(depth=2)          # Series of word coefficients
    df.ews.stream(depth=2, operator={"A": [[1, 0], [0, 0.5]]})
    ```

The path is time-augmented: channel 1 is `t` itself, so an operator acts on 1 + (number of channel columns) dimensions. Every method returns a new object and leaves the frame unchanged.
"""

from typing import Any, Mapping, Union

import pandas as pd

from .display import _display_check
from .ews_engine import scan_ews
from .flow_ops import OperatorPair
from .path_model import PiecewiseLinearPath, reweighted_path, time_augment
from .tensor_algebra import word_labels

OperatorLike = Union[OperatorPair, Mapping[str, Any], None]


@pd.api.extensions.register_dataframe_accessor("ews")
class PathAccessor:
    def __init__(self, pandas_obj: pd.DataFrame) -> None:
        self._obj = pandas_obj

    def _operator(self, operator: OperatorLike, dim: int) -> OperatorPair:
        if operator is None:
            return OperatorPair.zero(dim)
        if isinstance(operator, OperatorPair):
            return operator
        if isinstance(operator, Mapping):
            return OperatorPair.from_json(operator)
        raise TypeError(
            f"Expected an OperatorPair, an operator dict or None for `operator`, but received type {type(operator)}"
        )

    def to_path(self, clock_column: str = "t") -> PiecewiseLinearPath:
        """Converts the frame to a time-augmented piecewise-linear path.

        Args:
            clock_column: Name of the time column. It must come first.

        Returns:
            A path with channel 0 equal to the clock column, followed by the remaining columns in order.

        Raises:
            ValueError: If the clock column is missing or not first, there are no channel columns, or times do not strictly increase.
        """
        if self._obj.columns.empty or self._obj.columns[0] != clock_column:
            raise ValueError(
                f"Expected the first column to be {clock_column!r}, but found {list(self._obj.columns)[:1]}"
            )
        if self._obj.shape[1] < 2:
            raise ValueError("The frame needs at least one channel column after the time column")
        return time_augment(
            self._obj.drop(columns=clock_column).to_numpy(dtype=float),
            self._obj[clock_column].to_numpy(dtype=float),
        )

    def signature(
        self,
        depth: int,
        operator: OperatorLike = None,
        substeps: Union[int, None] = None,
        show: bool = False,
    ) -> pd.Series:
        """Truncated EWS over the whole frame. With no operator this is the classical signature.

        Args:
            depth: Truncation depth.
            operator: An OperatorPair, its JSON dict form, or None for A = 0.
            substeps: Sub-steps per segment. Defaults to the `ews.substeps` option.
            show: Whether to display the result.

        Returns:
            Series of coefficients indexed by word label, in grade-lexicographic order.
        """
        path = self.to_path()
        op = self._operator(operator, path.dim)
        result = pd.Series(
            scan_ews(path, op, depth, substeps).flatten(),
            index=word_labels(op.dim, depth),
            name="ews",
        )
        if show:
            _display_check(result, "EWS")
        return result

    def stream(
        self,
        depth: int,
        operator: OperatorLike = None,
        substeps: Union[int, None] = None,
        show: bool = False,
    ) -> pd.DataFrame:
        """EWS from the first row to every row.

        Returns:
            DataFrame indexed by `t`, one column per word label.
        """
        path = self.to_path()
        op = self._operator(operator, path.dim)
        tensors = scan_ews(path, op, depth, substeps, mode="streaming")
        result = pd.DataFrame(
            [tensor.flatten() for tensor in tensors],
            index=pd.Index(path.times, name="t"),
            columns=word_labels(op.dim, depth),
        )
        if show:
            _display_check(result, "Streaming EWS")
        return result

    def reweighted(
        self,
        operator: OperatorLike,
        horizon: float,
        substeps: Union[int, None] = None,
    ) -> pd.DataFrame:
        """Knots of the re-weighted path anchored at the knot time `horizon`.

        Returns:
            DataFrame with a `t` column and columns z1..zw.
        """
        path = self.to_path()
        op = self._operator(operator, path.dim)
        return reweighted_path(path, op, horizon, substeps).to_frame(
            [f"z{i + 1}" for i in range(op.dim)]
        )

from dataclasses import dataclass

from mindmerger_lab.core import CompositionError, Role, Space
from mindmerger_lab.tensorcore.primitives import reshape, slice_axis
from mindmerger_lab.tensorcore.tensor import Tensor


_ROLE_SPACE = {Role.X: Space.ENCODER, Role.X_MAPPED: Space.LLM, Role.T: Space.LLM}


@dataclass(frozen=True)
class HiddenSeq:
    """Length x dim hidden states tagged with the space they live in and their role."""

    values: Tensor
    space: Space
    role: Role
    language: str | None
    source_length: int

    def __post_init__(self):
        if len(self.values.shape) != 2:
            raise CompositionError(f"HiddenSeq values must be 2-D, got {self.values.shape}")
        if self.values.shape[0] == 0:
            raise CompositionError("HiddenSeq must hold at least one position")
        if _ROLE_SPACE[self.role] is not self.space:
            raise CompositionError(
                f"Role {self.role.value} lives in the {_ROLE_SPACE[self.role].value} space, "
                f"not {self.space.value}"
            )

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_batch_row(
        cls,
        row: Tensor,
        space: Space,
        role: Role,
        language: str | None,
        length: int,
    ) -> "HiddenSeq":
        """Wrap a (1, L, d) batch row whose first ``length`` positions are real."""
        values = reshape(row, row.shape[1:])
        if values.shape[0] != length:
            values = slice_axis(values, 0, length, axis=0)
        return cls(values, space, role, language, length)

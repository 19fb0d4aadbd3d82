"""Base Pydantic schemas with common configuration."""

from typing import Literal

from pydantic import BaseModel, ConfigDict


class BaseSchema(BaseModel):
    """Base schema with common configuration."""

    model_config = ConfigDict(
        populate_by_name=True,
        str_strip_whitespace=True,
        extra="forbid",
    )


class ReportSchema(BaseModel):
    """Schema for computed reports; tolerant of numpy scalars coerced to float."""

    model_config = ConfigDict(
        populate_by_name=True,
        ser_json_inf_nan="constants",
    )


# Three-valued outcome used by every numerical check that may be undecidable
Verdict = Literal["holds", "fails", "inconclusive"]

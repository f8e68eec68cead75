"""Serverless functions as ordered resource steps.

A step argument is a :class:`Ref`: a runtime constant, an invocation argument,
or the output of an earlier step. Only constant arguments can be acted on
before the invocation exists, which is what ``freshenable`` captures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Union

CONNECTION_SCOPES = ("runtime", "invocation")


class FunctionValidationError(ValueError):
    def __init__(self, function: str, step: int | None, message: str):
        where = f"step {step}" if step is not None else "definition"
        super().__init__(f"function {function!r}, {where}: {message}")
        self.function = function
        self.step = step


@dataclass(frozen=True)
class Ref:
    kind: str  # "const" | "arg" | "step"
    name: str | int

    @classmethod
    def parse(cls, text: "str | Ref") -> "Ref":
        if isinstance(text, Ref):
            return text
        if text.startswith("$args."):
            return cls("arg", text[len("$args."):])
        if text.startswith("$step."):
            return cls("step", int(text[len("$step."):]))
        return cls("const", text)

    @property
    def is_const(self) -> bool:
        return self.kind == "const"

    def __str__(self):
        if self.kind == "const":
            return str(self.name)
        return f"${'args' if self.kind == 'arg' else 'step'}.{self.name}"


def const(name: str) -> Ref:
    return Ref("const", name)


def arg(name: str) -> Ref:
    return Ref("arg", name)


def step_output(index: int) -> Ref:
    return Ref("step", index)


@dataclass(frozen=True)
class DataGet:
    endpoint: Ref
    object: Ref
    ttl_ms: float | None = None

    @property
    def freshenable(self) -> bool:
        return self.endpoint.is_const and self.object.is_const

    @property
    def refs(self) -> tuple[Ref, ...]:
        return (self.endpoint, self.object)


@dataclass(frozen=True)
class Compute:
    duration_ms: float
    keep: str | None = None  # runtime-scoped variable that receives the output

    freshenable = False
    refs = ()


@dataclass(frozen=True)
class DataPut:
    endpoint: Ref
    object: Ref
    size: int | None = None  # payload bytes; None means the scenario's sweep size

    @property
    def freshenable(self) -> bool:
        # Warming needs only the connection target; the payload never is constant.
        return self.endpoint.is_const

    @property
    def refs(self) -> tuple[Ref, ...]:
        return (self.endpoint, self.object)


Step = Union[DataGet, Compute, DataPut]


@dataclass(frozen=True)
class FunctionDef:
    name: str
    constants: Mapping[str, Any]
    steps: tuple[Step, ...]
    ttl_ms: float | None = None
    connection_scope: str = "runtime"
    args: Mapping[str, Any] = field(default_factory=dict)  # default invocation args

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "constants", dict(self.constants))
        object.__setattr__(self, "args", dict(self.args))

    def validate(self) -> "FunctionDef":
        if not self.name:
            raise FunctionValidationError(self.name, None, "empty name")
        if not self.steps:
            raise FunctionValidationError(self.name, None, "no steps")
        if self.connection_scope not in CONNECTION_SCOPES:
            raise FunctionValidationError(self.name, None, f"unknown connection scope {self.connection_scope!r}")
        if self.ttl_ms is not None and self.ttl_ms < 0:
            raise FunctionValidationError(self.name, None, "ttl_ms must be >= 0")
        for i, step in enumerate(self.steps):
            if isinstance(step, Compute):
                if step.duration_ms < 0:
                    raise FunctionValidationError(self.name, i, "negative compute duration")
                continue
            if not isinstance(step, (DataGet, DataPut)):
                raise FunctionValidationError(self.name, i, f"unknown step type {type(step).__name__}")
            for ref in step.refs:
                if ref.kind == "const" and ref.name not in self.constants:
                    raise FunctionValidationError(self.name, i, f"undeclared constant {ref.name!r}")
                if ref.kind == "step" and not (isinstance(ref.name, int) and 0 <= ref.name < i):
                    raise FunctionValidationError(self.name, i, f"reference to step {ref.name} is not a prior step")
            if isinstance(step, DataGet) and step.ttl_ms is not None and step.ttl_ms < 0:
                raise FunctionValidationError(self.name, i, "ttl_ms must be >= 0")
            if isinstance(step, DataPut) and step.size is not None and step.size < 0:
                raise FunctionValidationError(self.name, i, "negative put size")
        return self

    def freshenable_steps(self) -> list[int]:
        return [i for i, s in enumerate(self.steps) if s.freshenable]

    def constant_endpoint(self, step: Step) -> str | None:
        """Endpoint id of a step whose endpoint is a constant, else None."""
        ref = getattr(step, "endpoint", None)
        if ref is None or not ref.is_const:
            return None
        return str(self.constants[ref.name])

    def endpoint_ids(self) -> set[str]:
        return {ep for s in self.steps if (ep := self.constant_endpoint(s)) is not None}


def sample_lambda(endpoint: str = "store", *, put_size: int | None = None,
                  compute_ms: float = 5.0, ttl_ms: float | None = None) -> FunctionDef:
    """The running example: fetch with constants, compute over data and args, put the result."""
    return FunctionDef(
        name="lambda",
        constants={"CREDS": endpoint, "ID1": "input-object", "ID2": "output-object"},
        steps=(
            DataGet(const("CREDS"), const("ID1")),
            Compute(compute_ms),
            DataPut(const("CREDS"), const("ID2"), size=put_size),
        ),
        ttl_ms=ttl_ms,
    ).validate()

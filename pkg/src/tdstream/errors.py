"""Exception hierarchy.

Validation failures are raised as the first violation found, with every
violation of the program attached as ``.violations``.
"""
from __future__ import annotations


class TdError(Exception):
    pass


class ParseError(TdError):
    def __init__(self, msg: str, line: int | None = None, col: int | None = None):
        self.msg, self.line, self.col = msg, line, col
        where = f"{line}:{col}: " if line is not None else ""
        super().__init__(where + msg)


class StreamFormatError(TdError):
    pass


class ValidationError(TdError):
    violations: list["ValidationError"]

    def __init__(self, msg: str, rule=None):
        self.rule = rule
        if rule is not None and getattr(rule, "line", None):
            msg = f"line {rule.line}: {msg}"
        super().__init__(msg)
        self.violations = [self]


class NotForwardPropagating(ValidationError):
    def __init__(self, rule, literal):
        self.literal = literal
        super().__init__(f"{literal} looks into the future in rule {rule}", rule)


class MultipleTimeVariables(ValidationError):
    def __init__(self, rule, names):
        self.names = tuple(names)
        super().__init__(f"rule {rule} uses time variables {', '.join(names)}", rule)


class UnsafeVariable(ValidationError):
    def __init__(self, rule, var: str):
        self.var = var
        super().__init__(f"variable {var} is not bound by a positive condition in {rule}", rule)


class ArityMismatch(ValidationError):
    def __init__(self, pred: str, arities, rule=None):
        self.pred = pred
        super().__init__(f"predicate {pred} used with arities {sorted(arities)}", rule)


class NegationCycle(ValidationError):
    """``cycle`` is a list of ``(body_pred, head_pred, negative)`` edges that
    closes on itself and contains at least one negative edge."""

    kind = "negation cycle"

    def __init__(self, cycle):
        self.cycle = list(cycle)
        path = " -> ".join([self.cycle[0][0]] + [f"{'~' if n else ''}{h}" for _, h, n in self.cycle])
        super().__init__(f"{self.kind} through {path}")

    @property
    def predicates(self) -> set[str]:
        return {e[0] for e in self.cycle}


class NotTemporallyStratified(NegationCycle):
    kind = "same-time negation cycle"


class NotGloballyStratified(NegationCycle):
    kind = "negation cycle"


class UnboundTimeVariable(ValidationError):
    def __init__(self, rule, var: str):
        self.var = var
        super().__init__(f"time variable {var} is used before a positive window binds it", rule)


class HeadAtOperator(ValidationError):
    pass


class NonTimeWindow(ValidationError):
    pass


class NameCollision(ValidationError):
    pass


class SchemaViolation(ValidationError):
    pass


class UnknownFluentValue(ValidationError):
    pass


class OutOfOrderInput(TdError):
    pass


class UnknownPredicate(TdError):
    pass

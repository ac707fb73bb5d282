"""Forward-mode dual numbers over numpy arrays.

Carries a value array of shape ``S`` together with a gradient array of
shape ``S + (n,)`` for a fixed number ``n`` of differentiation
parameters. Arithmetic operators and the numpy ufuncs the point model
needs (sqrt, sin, cos, arctan2, exp) are overloaded, so model code reads
like plain numpy. Only smooth operations are provided; branching on
values must happen outside (on ``.value``).
"""

from __future__ import annotations

import numpy as np


class Dual:
    __slots__ = ("value", "grad")

    def __init__(self, value, grad):
        self.value = np.asarray(value, dtype=float)
        self.grad = np.asarray(grad, dtype=float)

    @property
    def nparams(self) -> int:
        return self.grad.shape[-1]

    @staticmethod
    def variables(values) -> list["Dual"]:
        """One scalar Dual per entry, seeded with unit gradients."""
        values = np.asarray(values, dtype=float).reshape(-1)
        eye = np.eye(values.size)
        return [Dual(values[k], eye[k]) for k in range(values.size)]

    @staticmethod
    def constant(value, nparams: int) -> "Dual":
        value = np.asarray(value, dtype=float)
        return Dual(value, np.zeros(value.shape + (nparams,)))

    # -- helpers -----------------------------------------------------------

    def _coerce(self, other) -> "Dual":
        if isinstance(other, Dual):
            return other
        return Dual.constant(other, self.nparams)

    def __repr__(self):
        return f"Dual(value={self.value!r})"

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        o = self._coerce(other)
        return Dual(self.value + o.value, self.grad + o.grad)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return Dual(self.value - o.value, self.grad - o.grad)

    def __rsub__(self, other):
        o = self._coerce(other)
        return Dual(o.value - self.value, o.grad - self.grad)

    def __mul__(self, other):
        o = self._coerce(other)
        return Dual(
            self.value * o.value,
            self.grad * o.value[..., None] + o.grad * self.value[..., None],
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        inv = 1.0 / o.value
        val = self.value * inv
        return Dual(val, (self.grad - o.grad * val[..., None]) * inv[..., None])

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __neg__(self):
        return Dual(-self.value, -self.grad)

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float, np.integer, np.floating)):
            raise TypeError("only scalar exponents are supported")
        val = self.value ** exponent
        return Dual(val, (exponent * self.value ** (exponent - 1))[..., None] * self.grad)

    # -- ufunc dispatch ------------------------------------------------------

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs:
            return NotImplemented
        if ufunc in (np.add, np.subtract, np.multiply, np.true_divide, np.power, np.arctan2):
            a, b = (self._coerce(x) for x in inputs)
            if ufunc is np.add:
                return a + b
            if ufunc is np.subtract:
                return a - b
            if ufunc is np.multiply:
                return a * b
            if ufunc is np.true_divide:
                return a / b
            if ufunc is np.power:
                return a ** inputs[1]
            denom = a.value * a.value + b.value * b.value
            # arctan2(y, x): inputs arrive as (y, x)
            val = np.arctan2(a.value, b.value)
            grad = (b.value[..., None] * a.grad - a.value[..., None] * b.grad) / denom[..., None]
            return Dual(val, grad)
        if ufunc is np.negative:
            return -self
        if ufunc is np.square:
            return self * self
        if ufunc is np.sqrt:
            val = np.sqrt(self.value)
            return Dual(val, self.grad / (2.0 * val[..., None]))
        if ufunc is np.sin:
            return Dual(np.sin(self.value), np.cos(self.value)[..., None] * self.grad)
        if ufunc is np.cos:
            return Dual(np.cos(self.value), -np.sin(self.value)[..., None] * self.grad)
        if ufunc is np.exp:
            val = np.exp(self.value)
            return Dual(val, val[..., None] * self.grad)
        if ufunc is np.log:
            return Dual(np.log(self.value), self.grad / self.value[..., None])
        if ufunc is np.abs:
            sign = np.sign(self.value)
            return Dual(np.abs(self.value), sign[..., None] * self.grad)
        return NotImplemented

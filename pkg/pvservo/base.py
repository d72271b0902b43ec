import numpy as np


class BaseVector:
    """Fixed-length float vector with named fields.

    Subclasses list their field names in ``_fields``; a read-only property is
    created for each one.  Instances convert to numpy arrays, so every operation
    in the package accepts either a value type or a plain array-like.
    """
    _fields = ()

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        for index, field in enumerate(cls._fields):
            setattr(cls, field, property(_getter(index), doc=f'Component {index} ({field})'))

    @classmethod
    def from_values(cls, *values):
        if len(values) == 1 and np.ndim(values[0]) == 1:
            values = values[0]
        return cls(values)

    @classmethod
    def new(cls):
        return cls(np.zeros(len(cls._fields)))

    def __init__(self, values):
        if isinstance(values, BaseVector):
            values = values._values
        values = np.array(values, dtype=float)
        if values.shape != (len(self._fields),):
            raise ValueError(
                f'{type(self).__name__} takes {len(self._fields)} values {self._fields}, got shape {values.shape}'
            )
        values = self._normalize(values)
        values.setflags(write=False)
        self._values = values

    def _normalize(self, values):
        return values

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._values.copy()
        return self._values.astype(dtype)

    def __len__(self):
        return len(self._fields)

    def __iter__(self):
        return iter(self._values.tolist())

    def __getitem__(self, index):
        return self._values[index]

    def __repr__(self):
        body = ', '.join(f'{name}={value!r}' for name, value in zip(self._fields, self._values.tolist()))
        return f'{type(self).__name__}({body})'

    def to_values(self):
        return self._values.copy()

    def dup(self):
        return type(self)(self._values)

    def isequal(self, other):
        if type(other) is not type(self):
            raise TypeError(f'Argument of isequal must be of type {type(self).__name__}')
        return bool(np.array_equal(self._values, other._values))

    def isclose(self, other, *, rel_tol=1e-7, abs_tol=0.0):
        if type(other) is not type(self):
            raise TypeError(f'Argument of isclose must be of type {type(self).__name__}')
        return bool(np.allclose(self._values, other._values, rtol=rel_tol, atol=abs_tol))

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.isequal(other)

    __hash__ = None


def _getter(index):
    def get(self):
        return float(self._values[index])
    return get

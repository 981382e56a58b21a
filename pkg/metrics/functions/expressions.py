import logging
import re
from dataclasses import dataclass
from functools import cached_property
from typing import List, Tuple

import numpy as np
import sympy
from sympy.printing.str import StrPrinter

from metrics.functions.exceptions import (
    ArityError, ExprDomainError, ExprError, ExprSyntaxError, UnknownIdentifierError
)

logger = logging.getLogger(__name__)

FUNCTIONS = {
    'sin': sympy.sin,
    'cos': sympy.cos,
    'exp': sympy.exp,
    'log': sympy.log,
    'sqrt': sympy.sqrt,
}

# Decimal literals keep 17 significant digits so compiled code reproduces the double exactly
FLOAT_DIGITS = 17

NON_REAL_ATOMS = (sympy.S.ComplexInfinity, sympy.S.NaN, sympy.S.Infinity, sympy.S.NegativeInfinity,
                  sympy.S.ImaginaryUnit)

VARIABLE_PATTERN = re.compile(r'^([xy])([1-9][0-9]*)$')
TOKEN_PATTERN = re.compile(
    r'\s*(?:'
    r'(?P<number>(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)'
    r'|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)'
    r'|(?P<op>[-+*/^(),])'
    r')'
)


def variable(kind: str, index: int) -> sympy.Symbol:
    return sympy.Symbol(f"{kind}{index}")


def _variable_key(symbol: sympy.Symbol) -> Tuple[str, int]:
    match = VARIABLE_PATTERN.match(symbol.name)
    return match.group(1), int(match.group(2))


class _ExpressionPrinter(StrPrinter):
    """Prints sympy trees in the coefficient grammar"""

    def _print_Exp1(self, expr):
        return 'exp(1)'


_printer = _ExpressionPrinter({'full_prec': False})


@dataclass(frozen=True)
class Expr:
    """Immutable coefficient expression over base coordinates x1..xn and directions y1..yn"""

    node: sympy.Expr

    @cached_property
    def arguments(self) -> Tuple[sympy.Symbol, ...]:
        return tuple(sorted(self.node.free_symbols, key=_variable_key))

    @cached_property
    def _compiled(self):
        logger.debug(f"Compiling expression {self}")
        return sympy.lambdify(self.arguments, self.node, modules='numpy')

    def evaluate(self, x: np.ndarray, y=None):
        if self.node.has(*NON_REAL_ATOMS):
            raise ExprDomainError(f"Expression {self} has no real value")

        values = []
        for symbol in self.arguments:
            kind, index = _variable_key(symbol)
            coordinates = x if kind == 'x' else y
            if coordinates is None or index > len(coordinates):
                raise ExprDomainError(f"Expression uses {symbol.name} but no such coordinate was supplied")
            values.append(coordinates[index - 1])

        with np.errstate(divide='raise', invalid='raise'):
            try:
                result = self._compiled(*values)
            except (FloatingPointError, ZeroDivisionError) as e:
                raise ExprDomainError(f"Cannot evaluate {self}: {str(e)}")
        if np.iscomplexobj(result):
            raise ExprDomainError(f"Expression {self} has no real value")
        return result

    def derivative(self, symbol: sympy.Symbol) -> 'Expr':
        return Expr(sympy.diff(self.node, symbol))

    def to_text(self) -> str:
        return _printer.doprint(self.node).replace('**', '^')

    def __str__(self):
        return self.to_text()


class _Parser:
    """Recursive-descent parser: + - below * / below unary minus below ^ (right associative)"""

    def __init__(self, text: str):
        self.text = text
        self.tokens = self._tokenize(text)
        self.position = 0

    def _byte_offset(self, char_index):
        return len(self.text[:char_index].encode('utf-8'))

    def _tokenize(self, text) -> List[Tuple[str, str, int]]:
        tokens = []
        index = 0
        while index < len(text):
            if text[index:].strip() == '':
                break
            match = TOKEN_PATTERN.match(text, index)
            if not match or match.end() == index:
                start = index + (len(text[index:]) - len(text[index:].lstrip()))
                raise ExprSyntaxError(f"Unexpected character '{text[start]}'", self._byte_offset(start))
            kind = match.lastgroup
            tokens.append((kind, match.group(kind), self._byte_offset(match.start(kind))))
            index = match.end()
        tokens.append(('end', '', self._byte_offset(len(text))))
        return tokens

    def _peek(self):
        return self.tokens[self.position]

    def _next(self):
        token = self.tokens[self.position]
        self.position += 1
        return token

    def _at_op(self, *ops) -> bool:
        kind, value, _ = self._peek()
        return kind == 'op' and value in ops

    def _expect(self, text):
        kind, value, offset = self._next()
        if value != text or kind != 'op':
            found = value or 'end of input'
            raise ExprSyntaxError(f"Expected '{text}' but found '{found}'", offset)

    def parse(self) -> sympy.Expr:
        node = self._expression()
        kind, value, offset = self._peek()
        if kind != 'end':
            raise ExprSyntaxError(f"Unexpected token '{value}'", offset)
        return node

    def _expression(self):
        node = self._term()
        while self._at_op('+', '-'):
            op = self._next()[1]
            right = self._term()
            node = node + right if op == '+' else node - right
        return node

    def _term(self):
        node = self._unary()
        while self._at_op('*', '/'):
            op = self._next()[1]
            right = self._unary()
            node = node * right if op == '*' else node / right
        return node

    def _unary(self):
        if self._at_op('-'):
            self._next()
            return -self._unary()
        return self._power()

    def _power(self):
        base = self._primary()
        if self._at_op('^'):
            self._next()
            return sympy.Pow(base, self._unary())
        return base

    def _primary(self):
        kind, value, offset = self._next()
        if kind == 'number':
            if value.isdigit():
                return sympy.Integer(value)
            return sympy.Float(value, FLOAT_DIGITS)
        if kind == 'ident':
            return self._identifier(value, offset)
        if kind == 'op' and value == '(':
            node = self._expression()
            self._expect(')')
            return node
        found = value or 'end of input'
        raise ExprSyntaxError(f"Unexpected '{found}'", offset)

    def _identifier(self, name, offset):
        if self._at_op('('):
            if name not in FUNCTIONS:
                raise UnknownIdentifierError(name, offset)
            self._next()
            args = [self._expression()]
            while self._at_op(','):
                self._next()
                args.append(self._expression())
            self._expect(')')
            if len(args) != 1:
                raise ArityError(name, len(args), offset)
            return FUNCTIONS[name](args[0])
        if name in FUNCTIONS:
            raise ArityError(name, 0, offset)
        if name == 'pi':
            return sympy.pi
        match = VARIABLE_PATTERN.match(name)
        if match:
            return variable(match.group(1), int(match.group(2)))
        raise UnknownIdentifierError(name, offset)


def parse_expr(text: str) -> Expr:
    """Parse a coefficient expression into a sympy-backed expression"""
    if isinstance(text, bytes):
        text = text.decode('utf-8')
    return Expr(_Parser(str(text)).parse())


def eval_expr(e: Expr, x, y=None):
    """Evaluate at base point x (and directions y, one column per direction)"""
    x = np.asarray(x, dtype=float)
    if y is not None:
        y = np.asarray(y, dtype=float)
    result = e.evaluate(x, y)
    if np.ndim(result) == 0:
        return float(result)
    return np.asarray(result, dtype=float)


def diff_expr(e: Expr, i: int, kind: str = 'x') -> Expr:
    """Symbolic partial derivative with respect to x_i (or y_i)"""
    if i < 1:
        raise ExprError(f"Variable index must be at least 1, got {i}")
    return e.derivative(variable(kind, i))


def print_expr(e: Expr) -> str:
    """Text in the coefficient grammar that parses back to the same expression"""
    return e.to_text()


def max_index(e: Expr, kind: str = 'x') -> int:
    return max((index for k, index in map(_variable_key, e.arguments) if k == kind), default=0)

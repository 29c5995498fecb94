//! Small grammars used by the tests, the acceptance suite and the README.

/// Arithmetic expressions with left-recursive sums and products, unary signs,
/// parentheses and multi-digit integers.
pub const ARITHMETIC: &str = r#"%whitespace skip ;

Expr   -> Term | Expr "+" Term | Expr "-" Term ;
Term   -> Factor | Term "*" Factor | Term "/" Factor ;
Factor -> Int | "+" Factor | "-" Factor | "(" Expr ")" ;
Int    -> Digit Int | Digit ;
Digit  -> "0" | "1" | "2" | "3" | "4" | "5" | "6" | "7" | "8" | "9" ;
"#;

/// The arithmetic grammar annotated with the probabilities learned from the
/// single sample `1 + (2 * 3)`.
pub const ARITHMETIC_LEARNED: &str = r#"%whitespace skip ;

Expr   -> 0.6666666666666666 Term | 0.3333333333333333 Expr "+" Term | 0 Expr "-" Term ;
Term   -> 0.75 Factor | 0.25 Term "*" Factor | 0 Term "/" Factor ;
Factor -> 0.75 Int | 0 "+" Factor | 0 "-" Factor | 0.25 "(" Expr ")" ;
Int    -> 0 Digit Int | 1 Digit ;
Digit  -> 0 "0" | 0.3333333333333333 "1" | 0.3333333333333333 "2" | 0.3333333333333333 "3"
        | 0 "4" | 0 "5" | 0 "6" | 0 "7" | 0 "8" | 0 "9" ;
"#;

/// The inversion of [`ARITHMETIC_LEARNED`].
pub const ARITHMETIC_INVERTED: &str = r#"%whitespace skip ;

Expr   -> 0 Term | 0 Expr "+" Term | 1 Expr "-" Term ;
Term   -> 0 Factor | 0 Term "*" Factor | 1 Term "/" Factor ;
Factor -> 0 Int | 0.5 "+" Factor | 0.5 "-" Factor | 0 "(" Expr ")" ;
Int    -> 1 Digit Int | 0 Digit ;
Digit  -> 0.14285714285714285 "0" | 0 "1" | 0 "2" | 0 "3"
        | 0.14285714285714285 "4" | 0.14285714285714285 "5" | 0.14285714285714285 "6"
        | 0.14285714285714285 "7" | 0.14285714285714285 "8" | 0.14285714285714285 "9" ;
"#;

/// A compact JSON-like language: objects, arrays, strings over a small
/// alphabet, integers and literals. Uses epsilon alternatives for empty
/// containers.
pub const JSON_LIKE: &str = r#"%whitespace skip ;

Value    -> Object | Array | String | Number | "true" | "false" | "null" ;
Object   -> "{" Members "}" ;
Members  -> | Pair MoreMembers ;
MoreMembers -> | "," Pair MoreMembers ;
Pair     -> String ":" Value ;
Array    -> "[" Elements "]" ;
Elements -> | Value MoreElements ;
MoreElements -> | "," Value MoreElements ;
String   -> "\"" Chars "\"" ;
Chars    -> | Char Chars ;
Char     -> "a" | "b" | "c" | "x" | "y" | "z" ;
Number   -> Digits | "-" Digits ;
Digits   -> Digit | Digit Digits ;
Digit    -> "0" | "1" | "2" | "3" | "4" | "5" | "6" | "7" | "8" | "9" ;
"#;

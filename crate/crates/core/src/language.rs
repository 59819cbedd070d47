//! The interpreted language: lexicon, world models, expressions, and their
//! left- and right-branching surface forms.
//!
//! An expression is either a proper name or a relational noun applied to a
//! smaller expression. Its denotation is computed by recursive function
//! application against a [`WorldModel`], which is the ground-truth oracle for
//! every label in the datasets.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Possessive clitic, realized as a standalone token.
pub const POSSESSIVE: &str = "'s";
pub const DETERMINER: &str = "the";
pub const PREPOSITION: &str = "of";

pub type Token = String;

/// An individual of the universe, identified by its index in `0..U`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Individual(pub usize);

impl Individual {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for Individual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branching {
    /// `NP -> NP 's N`, e.g. "Ann 's child".
    Left,
    /// `NP -> the N of NP`, e.g. "the child of Ann".
    Right,
}

impl Branching {
    pub const ALL: [Branching; 2] = [Branching::Left, Branching::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Branching::Left => "left",
            Branching::Right => "right",
        }
    }

    /// Number of surface tokens for an expression of the given complexity.
    pub fn surface_len(self, complexity: usize) -> usize {
        match self {
            Branching::Left => 2 * complexity - 1,
            Branching::Right => 3 * complexity - 2,
        }
    }
}

impl fmt::Display for Branching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Branching {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "left" => Ok(Branching::Left),
            "right" => Ok(Branching::Right),
            other => Err(Error::config(format!("unknown branching `{other}`"))),
        }
    }
}

/// The content words of a language: proper names and relational nouns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub names: Vec<String>,
    pub nouns: Vec<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon {
            names: ["Ann", "Bill", "Dick", "George"].map(String::from).to_vec(),
            nouns: ["child", "parent", "friend", "enemy"].map(String::from).to_vec(),
        }
    }
}

impl Lexicon {
    pub fn new(names: Vec<String>, nouns: Vec<String>) -> Result<Self> {
        let lexicon = Lexicon { names, nouns };
        lexicon.validate()?;
        Ok(lexicon)
    }

    pub fn validate(&self) -> Result<()> {
        if self.names.is_empty() {
            return Err(Error::config("lexicon needs at least one name"));
        }
        let mut seen = std::collections::HashSet::new();
        for word in self.names.iter().chain(&self.nouns) {
            if [POSSESSIVE, DETERMINER, PREPOSITION].contains(&word.as_str()) {
                return Err(Error::config(format!("`{word}` is reserved as a grammatical word")));
            }
            if !seen.insert(word.as_str()) {
                return Err(Error::config(format!("duplicate word `{word}` in lexicon")));
            }
        }
        Ok(())
    }

    pub fn name_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn noun_index(&self, noun: &str) -> Option<usize> {
        self.nouns.iter().position(|n| n == noun)
    }
}

/// How noun denotations are drawn when sampling a world model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionClass {
    /// Uniform over all `U^U` total functions.
    AnyTotal,
    /// Uniform over all `U!` bijections.
    Permutation,
    /// Uniform over fixed-point-free bijections: nobody is their own
    /// parent, friend or enemy. Needs at least two individuals.
    Derangement,
    /// Each listed pair is a random permutation and its inverse; every other
    /// noun is an independent random permutation.
    InversePairs { pairs: Vec<(String, String)> },
}

impl Default for FunctionClass {
    fn default() -> Self {
        FunctionClass::AnyTotal
    }
}

impl FunctionClass {
    /// `child` and `parent` as mutual inverses.
    pub fn kinship_pairs() -> Self {
        FunctionClass::InversePairs {
            pairs: vec![("child".into(), "parent".into())],
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FunctionClass::AnyTotal => "any_total",
            FunctionClass::Permutation => "permutation",
            FunctionClass::Derangement => "derangement",
            FunctionClass::InversePairs { .. } => "inverse_pairs",
        }
    }
}

impl std::str::FromStr for FunctionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "any_total" | "any-total" => Ok(FunctionClass::AnyTotal),
            "permutation" => Ok(FunctionClass::Permutation),
            "derangement" => Ok(FunctionClass::Derangement),
            "inverse_pairs" | "inverse-pairs" => Ok(FunctionClass::kinship_pairs()),
            other => Err(Error::config(format!("unknown function class `{other}`"))),
        }
    }
}

/// A model-theoretic interpretation of a lexicon.
///
/// Name `i` denotes individual `i`; noun `k` denotes the total function
/// stored as the lookup table `noun_denotation[k]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldModel {
    lexicon: Lexicon,
    name_denotation: Vec<Individual>,
    noun_denotation: Vec<Vec<Individual>>,
}

impl WorldModel {
    /// Builds a world from explicit noun tables (`tables[k][x]` is the value of
    /// noun `k` at individual `x`). Names denote individuals in declared order.
    pub fn from_tables(lexicon: Lexicon, tables: Vec<Vec<usize>>) -> Result<Self> {
        lexicon.validate()?;
        let size = lexicon.names.len();
        if tables.len() != lexicon.nouns.len() {
            return Err(Error::config(format!(
                "{} noun tables given for {} nouns",
                tables.len(),
                lexicon.nouns.len()
            )));
        }
        let mut noun_denotation = Vec::with_capacity(tables.len());
        for (noun, table) in lexicon.nouns.iter().zip(tables) {
            if table.len() != size || table.iter().any(|&v| v >= size) {
                return Err(Error::config(format!(
                    "denotation of `{noun}` is not a total function on {size} individuals"
                )));
            }
            noun_denotation.push(table.into_iter().map(Individual).collect());
        }
        Ok(WorldModel {
            name_denotation: (0..size).map(Individual).collect(),
            lexicon,
            noun_denotation,
        })
    }

    /// The four-person universe used as a running example: `parent`,
    /// `friend` and `enemy` are given explicitly and `child` is the inverse of
    /// `parent`.
    pub fn example_universe() -> Self {
        // Ann=0, Bill=1, Dick=2, George=3
        let parent = vec![1, 3, 0, 2];
        let mut child = vec![0; 4];
        for (x, &p) in parent.iter().enumerate() {
            child[p] = x;
        }
        let friend = vec![2, 3, 0, 1];
        let enemy = vec![3, 2, 1, 0];
        WorldModel::from_tables(Lexicon::default(), vec![child, parent, friend, enemy])
            .expect("example universe is well formed")
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn universe_size(&self) -> usize {
        self.name_denotation.len()
    }

    pub fn names(&self) -> &[String] {
        &self.lexicon.names
    }

    pub fn nouns(&self) -> &[String] {
        &self.lexicon.nouns
    }

    pub fn denote_name(&self, name: &str) -> Result<Individual> {
        self.lexicon
            .name_index(name)
            .map(|i| self.name_denotation[i])
            .ok_or_else(|| Error::UnknownSymbol(name.to_string()))
    }

    pub fn apply_noun(&self, noun: &str, arg: Individual) -> Result<Individual> {
        let k = self
            .lexicon
            .noun_index(noun)
            .ok_or_else(|| Error::UnknownSymbol(noun.to_string()))?;
        Ok(self.noun_denotation[k][arg.0])
    }

    /// Lookup table of noun `k`.
    pub fn noun_table(&self, k: usize) -> &[Individual] {
        &self.noun_denotation[k]
    }
}

/// Samples a world model: names denote distinct individuals and every noun a
/// total function drawn from `class`.
pub fn sample_world_model<R: Rng + ?Sized>(
    universe_size: usize,
    lexicon: &Lexicon,
    class: &FunctionClass,
    rng: &mut R,
) -> Result<WorldModel> {
    if universe_size == 0 {
        return Err(Error::config("universe size must be positive"));
    }
    if lexicon.names.len() != universe_size {
        return Err(Error::config(format!(
            "{} names cannot denote a universe of {universe_size} distinct individuals",
            lexicon.names.len()
        )));
    }
    lexicon.validate()?;

    let permutation = |rng: &mut R| {
        let mut p: Vec<usize> = (0..universe_size).collect();
        p.shuffle(rng);
        p
    };

    let mut tables: Vec<Option<Vec<usize>>> = vec![None; lexicon.nouns.len()];
    match class {
        FunctionClass::AnyTotal => {
            for table in tables.iter_mut() {
                *table = Some((0..universe_size).map(|_| rng.random_range(0..universe_size)).collect());
            }
        }
        FunctionClass::Permutation => {
            for table in tables.iter_mut() {
                *table = Some(permutation(rng));
            }
        }
        FunctionClass::Derangement => {
            if universe_size < 2 {
                return Err(Error::config("a one-point universe has no derangements"));
            }
            for table in tables.iter_mut() {
                // rejection sampling; about 1/e of permutations qualify
                let mut p = permutation(rng);
                while p.iter().enumerate().any(|(x, &y)| x == y) {
                    p = permutation(rng);
                }
                *table = Some(p);
            }
        }
        FunctionClass::InversePairs { pairs } => {
            for (a, b) in pairs {
                let ia = lexicon
                    .noun_index(a)
                    .ok_or_else(|| Error::config(format!("inverse pair names unknown noun `{a}`")))?;
                let ib = lexicon
                    .noun_index(b)
                    .ok_or_else(|| Error::config(format!("inverse pair names unknown noun `{b}`")))?;
                if ia == ib || tables[ia].is_some() || tables[ib].is_some() {
                    return Err(Error::config(format!(
                        "noun pair ({a}, {b}) overlaps another inverse pair"
                    )));
                }
                let forward = permutation(rng);
                let mut inverse = vec![0; universe_size];
                for (x, &y) in forward.iter().enumerate() {
                    inverse[y] = x;
                }
                tables[ia] = Some(forward);
                tables[ib] = Some(inverse);
            }
            for table in tables.iter_mut().filter(|t| t.is_none()) {
                *table = Some(permutation(rng));
            }
        }
    }
    let tables = tables.into_iter().map(|t| t.expect("every noun sampled")).collect();
    WorldModel::from_tables(lexicon.clone(), tables)
}

/// Abstract syntax of a noun phrase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Expression {
    Leaf(String),
    Apply(String, Box<Expression>),
}

impl Expression {
    pub fn leaf(name: impl Into<String>) -> Self {
        Expression::Leaf(name.into())
    }

    pub fn apply(noun: impl Into<String>, inner: Expression) -> Self {
        Expression::Apply(noun.into(), Box::new(inner))
    }

    /// Builds `nouns[k-1](... nouns[0](name))`: the first noun is applied
    /// innermost.
    pub fn chain<S: AsRef<str>>(name: &str, nouns: &[S]) -> Self {
        nouns
            .iter()
            .fold(Expression::leaf(name), |inner, noun| Expression::apply(noun.as_ref(), inner))
    }

    /// Number of content words.
    pub fn complexity(&self) -> usize {
        let mut depth = 1;
        let mut node = self;
        while let Expression::Apply(_, inner) = node {
            depth += 1;
            node = inner;
        }
        depth
    }

    /// Denotation of the expression in `world`.
    pub fn interpret(&self, world: &WorldModel) -> Result<Individual> {
        match self {
            Expression::Leaf(name) => world.denote_name(name),
            Expression::Apply(noun, inner) => world.apply_noun(noun, inner.interpret(world)?),
        }
    }

    /// Surface realization under the given branching direction.
    pub fn surface(&self, branching: Branching) -> Vec<Token> {
        let mut out = Vec::with_capacity(branching.surface_len(self.complexity()));
        self.write_surface(branching, &mut out);
        out
    }

    fn write_surface(&self, branching: Branching, out: &mut Vec<Token>) {
        match (self, branching) {
            (Expression::Leaf(name), _) => out.push(name.clone()),
            (Expression::Apply(noun, inner), Branching::Left) => {
                inner.write_surface(branching, out);
                out.push(POSSESSIVE.into());
                out.push(noun.clone());
            }
            (Expression::Apply(noun, inner), Branching::Right) => {
                out.push(DETERMINER.into());
                out.push(noun.clone());
                out.push(PREPOSITION.into());
                inner.write_surface(branching, out);
            }
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expression::Leaf(name) => f.write_str(name),
            Expression::Apply(noun, inner) => write!(f, "{noun}({inner})"),
        }
    }
}

pub fn complexity(expr: &Expression) -> usize {
    expr.complexity()
}

pub fn interpret(expr: &Expression, world: &WorldModel) -> Result<Individual> {
    expr.interpret(world)
}

pub fn surface(expr: &Expression, branching: Branching) -> Vec<Token> {
    expr.surface(branching)
}

/// All expressions of exactly `complexity` content words, ordered by name
/// index and then by the noun indices from innermost to outermost.
pub fn enumerate_expressions(complexity: usize, lexicon: &Lexicon) -> Result<Vec<Expression>> {
    if complexity < 1 {
        return Err(Error::config("expression complexity must be at least 1"));
    }
    let depth = complexity - 1;
    let n_nouns = lexicon.nouns.len();
    if depth > 0 && n_nouns == 0 {
        return Ok(Vec::new());
    }
    let per_name = n_nouns.pow(depth as u32);
    let mut out = Vec::with_capacity(lexicon.names.len() * per_name);
    let mut digits = vec![0usize; depth];
    for name in &lexicon.names {
        for code in 0..per_name {
            // most significant digit = innermost noun
            let mut rest = code;
            for slot in digits.iter_mut().rev() {
                *slot = rest % n_nouns;
                rest /= n_nouns;
            }
            let nouns: Vec<&str> = digits.iter().map(|&k| lexicon.nouns[k].as_str()).collect();
            out.push(Expression::chain(name, &nouns));
        }
    }
    Ok(out)
}

/// Recovers the expression from a well-formed surface string.
pub fn parse(tokens: &[Token], branching: Branching, lexicon: &Lexicon) -> Result<Expression> {
    let err = |position: usize, message: String| Error::Parse { position, message };
    let describe = |pos: usize| -> String {
        tokens
            .get(pos)
            .map(|t| format!("`{t}`"))
            .unwrap_or_else(|| "end of input".to_string())
    };
    let expect_name = |pos: usize| -> Result<Expression> {
        match tokens.get(pos) {
            Some(t) if lexicon.name_index(t).is_some() => Ok(Expression::leaf(t.as_str())),
            _ => Err(err(pos, format!("expected a name, found {}", describe(pos)))),
        }
    };
    let expect_noun = |pos: usize| -> Result<&str> {
        match tokens.get(pos) {
            Some(t) if lexicon.noun_index(t).is_some() => Ok(t.as_str()),
            _ => Err(err(pos, format!("expected a noun, found {}", describe(pos)))),
        }
    };
    let expect_word = |pos: usize, word: &str| -> Result<()> {
        match tokens.get(pos) {
            Some(t) if t == word => Ok(()),
            _ => Err(err(pos, format!("expected `{word}`, found {}", describe(pos)))),
        }
    };

    match branching {
        Branching::Left => {
            // NP ('s N)*
            let mut expr = expect_name(0)?;
            let mut pos = 1;
            while pos < tokens.len() {
                expect_word(pos, POSSESSIVE)?;
                let noun = expect_noun(pos + 1)?;
                expr = Expression::apply(noun, expr);
                pos += 2;
            }
            Ok(expr)
        }
        Branching::Right => {
            // (the N of)* NP
            let mut nouns = Vec::new();
            let mut pos = 0;
            while tokens.get(pos).map(String::as_str) == Some(DETERMINER) {
                nouns.push(expect_noun(pos + 1)?);
                expect_word(pos + 2, PREPOSITION)?;
                pos += 3;
            }
            let leaf = expect_name(pos)?;
            if pos + 1 < tokens.len() {
                return Err(err(pos + 1, format!("unexpected trailing {}", describe(pos + 1))));
            }
            Ok(nouns.into_iter().rev().fold(leaf, |inner, noun| Expression::apply(noun, inner)))
        }
    }
}

use thiserror::Error;

use crate::sexpr::Pos;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{pos}: syntax error: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: distribution for {what} is not normalized (sums to {sum})")]
    NotNormalized { pos: Pos, what: String, sum: f64 },
    #[error("cyclic clause set through {0}")]
    CyclicClauses(String),
    #[error("{pos}: duplicate operator `{name}`")]
    DuplicateOperator { pos: Pos, name: String },
}

impl ParseError {
    pub(crate) fn syntax(pos: Pos, msg: impl Into<String>) -> Self {
        ParseError::Syntax {
            pos,
            msg: msg.into(),
        }
    }

    pub fn pos(&self) -> Option<Pos> {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::NotNormalized { pos, .. }
            | ParseError::DuplicateOperator { pos, .. } => Some(*pos),
            ParseError::CyclicClauses(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroundError {
    #[error("operator `{schema}` has parameter type `{ty}` with no constants")]
    UninstantiableType { schema: String, ty: String },
    #[error("cyclic ground clause set through {0}")]
    CyclicClauses(String),
    #[error("more than one clause matches {0}")]
    AmbiguousClause(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("link would create an ordering cycle between steps {0} and {1}")]
    WouldCreateCycle(usize, usize),
    #[error("ignorance link must originate at the start step, not step {0}")]
    IgnoranceNotFromStart(usize),
    #[error("unknown step {0}")]
    UnknownStep(usize),
    #[error("plan is incomplete: {0}")]
    IncompletePlan(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("label on step {0} has no outcome distribution")]
    LabelWithoutDistribution(usize),
    #[error("goal steps {0} and {1} have overlapping contexts")]
    OverlappingGoalContexts(usize, usize),
    #[error("no open goal node")]
    NoOpenGoalNode,
    #[error("influence variable `{0}` is not in the network")]
    MissingInfluenceVariable(String),
    #[error("no CPT row for `{var}` given {row:?}")]
    MissingCptRow { var: String, row: Vec<String> },
    #[error("variable `{0}` is not in the network")]
    VariableNotInNet(String),
    #[error("outcome space mismatch for `{var}`: operator {op:?}, variable {net:?}")]
    OutcomeSpaceMismatch {
        var: String,
        op: Vec<String>,
        net: Vec<String>,
    },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown outcome `{outcome}` for variable `{var}`")]
    UnknownOutcome { var: String, outcome: String },
    #[error("labels assign different outcomes to `{0}`")]
    InconsistentLabels(String),
    #[error("conditioning context has probability zero")]
    ZeroProbabilityContext,
    #[error("CPT for `{var}` is malformed: {msg}")]
    BadCpt { var: String, msg: String },
    #[error("network contains a cycle through `{0}`")]
    Cyclic(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("no plan reaches success probability {target:.6}; best achieved {best_achieved:.6}")]
    UnsolvableWithinEpsilon {
        target: f64,
        best_achieved: f64,
        expanded: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("malformed plan: {0}")]
    MalformedPlan(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

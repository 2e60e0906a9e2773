use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("reflection closure did not terminate after {0} rounds; Cartan matrix is not of finite type")]
    NotFiniteType(usize),

    #[error("divergent: {0}")]
    Divergent(String),

    #[error("internal consistency failure: {0}")]
    Consistency(String),

    #[error("singular matrix")]
    Singular,

    #[error("work budget exceeded: {required} candidates required, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("twisted contribution required, unsupported: d(L) = {d} (characters with chi^{d} = 1 contribute to the pole)")]
    CharacterObstruction { d: u64 },

    #[error("box bound violated by matrix {matrix:?}: height {height} does not dominate the box norm")]
    BoxBoundViolation { matrix: Vec<i64>, height: f64 },
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

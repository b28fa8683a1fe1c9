use crate::acl::{AgentId, AgentKind, CapabilityAdvertBody, Tick};
use crate::strips::pddl::{parse_domain, print_domain};
use crate::strips::{ActionSchema, Atom, DomainModel, StripsError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdvertError {
    #[error("envelope {0} is not an Inform/CapabilityAdvertBody heartbeat")]
    NotAHeartbeat(String),
    #[error("invalid advert: {0}")]
    Invalid(String),
    #[error("invalid advert model: {0}")]
    Model(#[from] StripsError),
}

/// What an agent can do, as carried in its heartbeat.
///
/// `fragment` is the agent's slice of the planning model: its schemas plus
/// the types, constants and predicates they mention.
#[derive(Clone, Debug, PartialEq)]
pub struct CapabilityAdvert {
    pub agent_id: AgentId,
    pub kind: AgentKind,
    pub location: Option<String>,
    pub heartbeat_period: Tick,
    pub sensed: Vec<Atom>,
    pub fragment: DomainModel,
}

impl CapabilityAdvert {
    pub fn new(agent_id: &str, kind: AgentKind, location: Option<&str>, heartbeat_period: Tick) -> Self {
        CapabilityAdvert {
            agent_id: agent_id.to_string(),
            kind,
            location: location.map(String::from),
            heartbeat_period,
            sensed: Vec::new(),
            fragment: DomainModel::new(agent_id),
        }
    }

    pub fn with_fragment(mut self, fragment: DomainModel) -> Self {
        self.fragment = fragment;
        self.fragment.name = self.agent_id.clone();
        self
    }

    pub fn with_sensed(mut self, sensed: Vec<Atom>) -> Self {
        self.sensed = sensed;
        self
    }

    pub fn schemas(&self) -> &[ActionSchema] {
        &self.fragment.schemas
    }

    pub fn validate(&self) -> Result<(), AdvertError> {
        if self.heartbeat_period == 0 {
            return Err(AdvertError::Invalid(format!("{}: heartbeat period must be positive", self.agent_id)));
        }
        if let Some(s) = self.schemas().iter().find(|s| s.owner.as_deref() != Some(self.agent_id.as_str())) {
            return Err(AdvertError::Invalid(format!(
                "{} advertises schema {} it does not own",
                self.agent_id,
                s.qualified_name()
            )));
        }
        self.fragment.validate()?;
        Ok(())
    }

    /// Same schemas, model and sensed atoms; location may differ.
    pub fn same_capabilities(&self, other: &CapabilityAdvert) -> bool {
        self.kind == other.kind && self.fragment == other.fragment && self.sensed == other.sensed
    }

    pub fn to_body(&self) -> CapabilityAdvertBody {
        CapabilityAdvertBody {
            agent_id: self.agent_id.clone(),
            kind: self.kind,
            location: self.location.clone(),
            heartbeat_period: self.heartbeat_period,
            sensed: self.sensed.iter().map(ToString::to_string).collect(),
            model: print_domain(&self.fragment),
        }
    }

    pub fn from_body(body: &CapabilityAdvertBody) -> Result<Self, AdvertError> {
        let fragment = parse_domain(&body.model)?;
        if fragment.name != body.agent_id.to_lowercase() {
            return Err(AdvertError::Invalid(format!(
                "model {} does not belong to {}",
                fragment.name, body.agent_id
            )));
        }
        let sensed = body
            .sensed
            .iter()
            .map(|s| s.parse::<Atom>())
            .collect::<Result<Vec<_>, _>>()?;
        let advert = CapabilityAdvert {
            agent_id: body.agent_id.clone(),
            kind: body.kind,
            location: body.location.clone(),
            heartbeat_period: body.heartbeat_period,
            sensed,
            fragment,
        };
        advert.validate()?;
        Ok(advert)
    }
}

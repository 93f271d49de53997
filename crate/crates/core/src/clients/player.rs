use super::profile::Profile;
use crate::bus::{BusError, Message, Mode, MsgType, Outbox, Participant};

/// Stepped client publishing one value per profile at every step.
pub struct ProfilePlayer {
    name: String,
    profiles: Vec<(String, Profile)>,
}

impl ProfilePlayer {
    /// `profiles` pairs a topic with the series published on it.
    pub fn new(name: &str, profiles: Vec<(String, Profile)>) -> Self {
        Self { name: name.to_string(), profiles }
    }
}

impl Participant for ProfilePlayer {
    fn name(&self) -> &str {
        &self.name
    }

    fn mode(&self) -> Mode {
        Mode::Stepped
    }

    fn subscriptions(&self) -> Vec<String> {
        Vec::new()
    }

    fn on_message(&mut self, msg: &Message, out: &mut Outbox) -> Result<(), BusError> {
        if msg.t != MsgType::Step {
            return Ok(());
        }
        let step = msg.step.unwrap_or_default();
        for (topic, profile) in &self.profiles {
            let v = profile
                .at(step)
                .ok_or_else(|| BusError::client(&self.name, format!("profile {} ends before step {step}", profile.name)))?;
            out.publish_number(topic, step, v);
        }
        out.step_done(step);
        Ok(())
    }
}

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense task index in `[0, num_tasks)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

impl TaskId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInfo {
    pub id: TaskId,
    pub name: String,
    /// Training-set size, used for temperature sampling and HRL/LRL splits.
    pub size: u64,
}

/// Registry of tasks with dense ids and unique names.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskTable {
    tasks: Vec<TaskInfo>,
}

impl TaskTable {
    pub fn new<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut table = TaskTable::default();
        for (name, size) in entries {
            table.push(name, size)?;
        }
        Ok(table)
    }

    pub fn push(&mut self, name: impl Into<String>, size: u64) -> Result<TaskId> {
        let name = name.into();
        if self.tasks.iter().any(|t| t.name == name) {
            return Err(Error::validation(format!("duplicate task name `{name}`")));
        }
        let id = TaskId(self.tasks.len() as u32);
        self.tasks.push(TaskInfo { id, name, size });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, id: TaskId) -> Option<&TaskInfo> {
        self.tasks.get(id.index())
    }

    pub fn name(&self, id: TaskId) -> &str {
        self.get(id).map(|t| t.name.as_str()).unwrap_or("?")
    }

    pub fn by_name(&self, name: &str) -> Option<TaskId> {
        self.tasks.iter().find(|t| t.name == name).map(|t| t.id)
    }

    pub fn ids(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.tasks.iter().map(|t| t.id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TaskInfo> {
        self.tasks.iter()
    }

    pub fn sizes(&self) -> std::collections::BTreeMap<TaskId, u64> {
        self.tasks.iter().map(|t| (t.id, t.size)).collect()
    }
}

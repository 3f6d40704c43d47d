// SPDX-License-Identifier: Apache-2.0

//! A small in-memory POSIX-style tree used as the oracle for randomized
//! file-system runs. Errors are errno values.

use std::collections::{BTreeMap, HashMap};

const ROOT: u64 = 1;
const MAX_LINKS: usize = 40;

pub enum Node {
    File(Vec<u8>),
    Dir(BTreeMap<String, u64>),
    Sym(String),
}

pub struct RefFs {
    nodes: HashMap<u64, Node>,
    /// Parent of each directory.
    parents: HashMap<u64, u64>,
    links: HashMap<u64, usize>,
    next: u64,
    hardlinks: bool,
}

type R<T> = Result<T, i32>;

fn split(path: &str) -> Vec<String> {
    path.split('/').filter(|c| !c.is_empty()).map(str::to_string).collect()
}

impl RefFs {
    pub fn new(hardlinks: bool) -> Self {
        let mut nodes = HashMap::new();
        nodes.insert(ROOT, Node::Dir(BTreeMap::new()));
        RefFs { nodes, parents: HashMap::new(), links: HashMap::new(), next: ROOT + 1, hardlinks }
    }

    fn entries(&self, dir: u64) -> R<&BTreeMap<String, u64>> {
        match &self.nodes[&dir] {
            Node::Dir(e) => Ok(e),
            _ => Err(libc::ENOTDIR),
        }
    }

    fn entries_mut(&mut self, dir: u64) -> &mut BTreeMap<String, u64> {
        match self.nodes.get_mut(&dir) {
            Some(Node::Dir(e)) => e,
            _ => unreachable!("checked directory"),
        }
    }

    fn resolve(&self, path: &str, follow_final: bool) -> R<u64> {
        let mut pending: Vec<String> = split(path).into_iter().rev().collect();
        let mut cur = ROOT;
        let mut followed = 0;
        while let Some(name) = pending.pop() {
            let child = *self.entries(cur)?.get(&name).ok_or(libc::ENOENT)?;
            match &self.nodes[&child] {
                Node::Sym(target) if !pending.is_empty() || follow_final => {
                    followed += 1;
                    if followed > MAX_LINKS {
                        return Err(libc::ELOOP);
                    }
                    if target.starts_with('/') {
                        cur = ROOT;
                    }
                    pending.extend(split(target).into_iter().rev());
                }
                _ => cur = child,
            }
        }
        Ok(cur)
    }

    fn resolve_parent(&self, path: &str) -> R<(u64, String)> {
        let mut comps = split(path);
        let name = comps.pop().ok_or(libc::EINVAL)?;
        let dir = self.resolve(&format!("/{}", comps.join("/")), true)?;
        self.entries(dir)?;
        Ok((dir, name))
    }

    fn add(&mut self, dir: u64, name: &str, node: Node) -> R<u64> {
        if self.entries(dir)?.contains_key(name) {
            return Err(libc::EEXIST);
        }
        let id = self.next;
        self.next += 1;
        if matches!(node, Node::Dir(_)) {
            self.parents.insert(id, dir);
        }
        self.nodes.insert(id, node);
        self.links.insert(id, 1);
        self.entries_mut(dir).insert(name.to_string(), id);
        Ok(id)
    }

    /// Removes the entry and drops the node when its last name goes.
    fn remove_entry(&mut self, dir: u64, name: &str) {
        let id = self.entries_mut(dir).remove(name).expect("entry exists");
        let n = self.links.get_mut(&id).expect("link count");
        *n -= 1;
        if *n == 0 {
            self.links.remove(&id);
            self.nodes.remove(&id);
            self.parents.remove(&id);
        }
    }

    fn file_mut(&mut self, path: &str) -> R<&mut Vec<u8>> {
        let id = self.resolve(path, true)?;
        match self.nodes.get_mut(&id) {
            Some(Node::File(d)) => Ok(d),
            Some(Node::Dir(_)) => Err(libc::EISDIR),
            _ => Err(libc::EINVAL),
        }
    }

    pub fn create(&mut self, path: &str) -> R<()> {
        let (dir, name) = self.resolve_parent(path)?;
        self.add(dir, &name, Node::File(Vec::new())).map(drop)
    }

    pub fn mkdir(&mut self, path: &str) -> R<()> {
        let (dir, name) = self.resolve_parent(path)?;
        self.add(dir, &name, Node::Dir(BTreeMap::new())).map(drop)
    }

    pub fn symlink(&mut self, target: &str, path: &str) -> R<()> {
        let (dir, name) = self.resolve_parent(path)?;
        self.add(dir, &name, Node::Sym(target.to_string())).map(drop)
    }

    pub fn write(&mut self, path: &str, writes: &[(u64, Vec<u8>)]) -> R<()> {
        let data = self.file_mut(path)?;
        for (off, bytes) in writes {
            let off = *off as usize;
            if bytes.is_empty() {
                continue;
            }
            if data.len() < off + bytes.len() {
                data.resize(off + bytes.len(), 0);
            }
            data[off..off + bytes.len()].copy_from_slice(bytes);
        }
        Ok(())
    }

    pub fn truncate(&mut self, path: &str, size: u64) -> R<()> {
        self.file_mut(path)?.resize(size as usize, 0);
        Ok(())
    }

    pub fn read(&self, path: &str) -> R<Vec<u8>> {
        match &self.nodes[&self.resolve(path, true)?] {
            Node::File(d) => Ok(d.clone()),
            Node::Dir(_) => Err(libc::EISDIR),
            Node::Sym(_) => Err(libc::EINVAL),
        }
    }

    pub fn readdir(&self, path: &str) -> R<Vec<String>> {
        Ok(self.entries(self.resolve(path, true)?)?.keys().cloned().collect())
    }

    pub fn unlink(&mut self, path: &str) -> R<()> {
        let (dir, name) = self.resolve_parent(path)?;
        let id = *self.entries(dir)?.get(&name).ok_or(libc::ENOENT)?;
        if matches!(self.nodes[&id], Node::Dir(_)) {
            return Err(libc::EISDIR);
        }
        self.remove_entry(dir, &name);
        Ok(())
    }

    pub fn rmdir(&mut self, path: &str) -> R<()> {
        let (dir, name) = self.resolve_parent(path)?;
        let id = *self.entries(dir)?.get(&name).ok_or(libc::ENOENT)?;
        match &self.nodes[&id] {
            Node::Dir(e) if !e.is_empty() => return Err(libc::ENOTEMPTY),
            Node::Dir(_) => {}
            _ => return Err(libc::ENOTDIR),
        }
        self.remove_entry(dir, &name);
        Ok(())
    }

    pub fn link(&mut self, existing: &str, path: &str) -> R<()> {
        if !self.hardlinks {
            return Err(libc::EOPNOTSUPP);
        }
        let id = self.resolve(existing, false)?;
        let (dir, name) = self.resolve_parent(path)?;
        if matches!(self.nodes[&id], Node::Dir(_)) {
            return Err(libc::EISDIR);
        }
        if self.entries(dir)?.contains_key(&name) {
            return Err(libc::EEXIST);
        }
        self.entries_mut(dir).insert(name, id);
        *self.links.get_mut(&id).expect("link count") += 1;
        Ok(())
    }

    fn is_ancestor(&self, candidate: u64, mut dir: u64) -> bool {
        loop {
            if dir == candidate {
                return true;
            }
            if dir == ROOT {
                return false;
            }
            dir = self.parents[&dir];
        }
    }

    pub fn rename(&mut self, from: &str, to: &str) -> R<()> {
        let (sdir, sname) = self.resolve_parent(from)?;
        let (ddir, dname) = self.resolve_parent(to)?;
        let moved = *self.entries(sdir)?.get(&sname).ok_or(libc::ENOENT)?;
        let target = self.entries(ddir)?.get(&dname).copied();
        if target == Some(moved) {
            return Ok(());
        }
        let moving_dir = matches!(self.nodes[&moved], Node::Dir(_));
        if moving_dir && self.is_ancestor(moved, ddir) {
            return Err(libc::EINVAL);
        }
        if let Some(t) = target {
            match (&self.nodes[&t], moving_dir) {
                (Node::Dir(_), false) => return Err(libc::EISDIR),
                (Node::Dir(e), true) if !e.is_empty() => return Err(libc::ENOTEMPTY),
                (Node::Dir(_), true) => {}
                (_, true) => return Err(libc::ENOTDIR),
                (_, false) => {}
            }
            self.remove_entry(ddir, &dname);
        }
        self.entries_mut(sdir).remove(&sname);
        self.entries_mut(ddir).insert(dname, moved);
        if moving_dir {
            self.parents.insert(moved, ddir);
        }
        Ok(())
    }

    /// Every path in the tree with its node, without following symlinks.
    pub fn walk(&self) -> Vec<(String, &Node)> {
        let mut out = Vec::new();
        let mut stack = vec![(String::new(), ROOT)];
        while let Some((path, dir)) = stack.pop() {
            for (name, &id) in self.entries(dir).expect("walked directory") {
                let child = format!("{path}/{name}");
                if matches!(self.nodes[&id], Node::Dir(_)) {
                    stack.push((child.clone(), id));
                }
                out.push((child, &self.nodes[&id]));
            }
        }
        out
    }

    /// The node at `path` without following a final symlink.
    pub fn lnode(&self, path: &str) -> Option<&Node> {
        self.resolve(path, false).ok().map(|id| &self.nodes[&id])
    }

    pub fn nlink(&self, path: &str) -> usize {
        self.resolve(path, false).map_or(0, |id| self.links[&id])
    }
}

//! Counts the system calls a child process makes between two markers.
//!
//! The child is started under ptrace and stopped at every syscall entry.
//! Code under test brackets the region of interest with [`marker`]; calls
//! outside the brackets are ignored. Linux on x86_64 only.

use std::io;
use std::process::Command;

/// Tag passed in the first argument register so stray calls of the marker
/// syscall are not taken for markers.
const MARKER_TAG: u64 = 0xa7a5_5ca1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    /// Syscalls seen inside marker brackets, markers excluded.
    pub between_markers: u64,
    /// Completed bracket pairs.
    pub brackets: u32,
    pub exit_code: i32,
}

/// Opens or closes a counted region when running under [`trace`].
pub fn marker() {
    // getppid ignores its arguments; the tag rides along in rdi
    unsafe {
        libc::syscall(libc::SYS_getppid, MARKER_TAG);
    }
}

#[cfg(all(target_os = "linux", target_arch = "x86_64"))]
pub fn trace(mut cmd: Command) -> io::Result<Trace> {
    use std::collections::HashMap;
    use std::os::unix::process::CommandExt;

    fn check(r: libc::c_long) -> io::Result<libc::c_long> {
        if r == -1 {
            Err(io::Error::last_os_error())
        } else {
            Ok(r)
        }
    }

    unsafe {
        cmd.pre_exec(|| {
            if libc::ptrace(libc::PTRACE_TRACEME, 0, 0, 0) == -1 {
                return Err(io::Error::last_os_error());
            }
            Ok(())
        });
    }
    let child = cmd.spawn()?;
    let pid = child.id() as libc::pid_t;
    let wait = |who: libc::pid_t| -> io::Result<(libc::pid_t, i32)> {
        let mut status = 0;
        let tid = unsafe { libc::waitpid(who, &mut status, libc::__WALL) };
        if tid == -1 {
            return Err(io::Error::last_os_error());
        }
        Ok((tid, status))
    };
    // stopped by the exec
    let (_, status) = wait(pid)?;
    if !libc::WIFSTOPPED(status) {
        return Err(io::Error::other("child did not stop after exec"));
    }
    let opts = libc::PTRACE_O_TRACESYSGOOD | libc::PTRACE_O_EXITKILL | libc::PTRACE_O_TRACECLONE;
    check(unsafe { libc::ptrace(libc::PTRACE_SETOPTIONS, pid, 0, opts) })?;

    let mut out = Trace::default();
    let mut counting = false;
    // per thread: next syscall stop is an entry
    let mut entering: HashMap<libc::pid_t, bool> = HashMap::new();
    let mut resume = (pid, 0);
    loop {
        // a thread that vanished between stops is not an error
        unsafe { libc::ptrace(libc::PTRACE_SYSCALL, resume.0, 0, resume.1) };
        let (tid, status) = wait(-1)?;
        resume = (tid, 0);
        if libc::WIFEXITED(status) || libc::WIFSIGNALED(status) {
            entering.remove(&tid);
            if tid == pid {
                out.exit_code = if libc::WIFEXITED(status) {
                    libc::WEXITSTATUS(status)
                } else {
                    128 + libc::WTERMSIG(status)
                };
                break;
            }
            // keep the remaining threads going
            resume = (pid, 0);
            continue;
        }
        let sig = libc::WSTOPSIG(status);
        if sig == libc::SIGTRAP && status >> 16 != 0 {
            // clone event; the new thread reports its own initial stop
            continue;
        }
        if sig != libc::SIGTRAP | 0x80 {
            let new_thread = sig == libc::SIGSTOP && !entering.contains_key(&tid);
            entering.entry(tid).or_insert(true);
            if !new_thread {
                resume.1 = sig;
            }
            continue;
        }
        let e = entering.entry(tid).or_insert(true);
        if *e {
            let mut regs: libc::user_regs_struct = unsafe { std::mem::zeroed() };
            check(unsafe { libc::ptrace(libc::PTRACE_GETREGS, tid, 0, &mut regs) })?;
            let is_marker = regs.orig_rax == libc::SYS_getppid as u64 && regs.rdi == MARKER_TAG;
            if is_marker {
                if counting {
                    out.brackets += 1;
                }
                counting = !counting;
            } else if counting {
                out.between_markers += 1;
            }
        }
        *e = !*e;
    }
    // reaped by waitpid above; drop without waiting again
    std::mem::forget(child);
    Ok(out)
}

#[cfg(not(all(target_os = "linux", target_arch = "x86_64")))]
pub fn trace(_cmd: Command) -> io::Result<Trace> {
    Err(io::Error::new(io::ErrorKind::Unsupported, "syscall tracing needs Linux on x86_64"))
}

# Sandbox harness shim.
#
# Reads one JSON request on stdin:
#   {"mode": "call" | "probe", "source": str, "function": str,
#    "args": [tagged value, ...], "arity": int, "max_stdout": int, "nonce": str}
# Writes one JSON reply line on the original stdout:
#   {"nonce": str, "outcome": <tagged outcome>, "stdout": str, "stdout_truncated": bool}
#   {"nonce": str, "probe": "ok" | "mismatch", "detail": str}
#
# Batch mode runs many calls of one candidate. The request carries "vectors"
# (a list of argument lists), "timeout" (seconds per call), "parallel" and
# "reply_cap". Each call runs in a child forked after the imports above, so
# no state survives between calls. The reply is one line:
#   {"nonce": str, "batch": [{"outcome": ..., "stdout": str,
#                             "stdout_truncated": bool, "elapsed": float}, ...]}
#
# Tagged values: {"int": n}, {"float": "repr"}, {"bool": b}, {"text": s},
# {"list": [...]}, "none". Outcomes: {"returned": value}, {"raised": str},
# "memory_exceeded", {"harness_failure": str}.

import sys
import os
import json
import builtins
import select
import time

# Modules a candidate may import. Everything else is denied once the audit
# hook is installed, because importing a new module needs to open files.
import math, itertools, functools, collections, re, string, heapq, bisect, operator, statistics, random, copy, typing

MAX_DEPTH = 4
INT_MIN, INT_MAX = -(2 ** 63), 2 ** 63 - 1


class Unencodable(Exception):
    pass


def decode(v):
    if v == "none":
        return None
    (tag, x), = v.items()
    if tag == "int":
        return int(x)
    if tag == "float":
        return float(x)
    if tag == "bool":
        return bool(x)
    if tag == "text":
        return str(x)
    if tag == "list":
        return [decode(i) for i in x]
    raise ValueError("unknown tag %r" % tag)


def encode(v, depth=0):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return {"bool": v}
    if isinstance(v, int):
        if INT_MIN <= v <= INT_MAX:
            return {"int": int(v)}
        raise Unencodable("integer out of 64-bit range")
    if isinstance(v, float):
        return {"float": repr(float(v))}
    if isinstance(v, str):
        try:
            v.encode("utf-8")
        except UnicodeEncodeError:
            raise Unencodable("string is not valid unicode")
        return {"text": str(v)}
    if isinstance(v, (list, tuple)):
        if depth >= MAX_DEPTH:
            raise Unencodable("nesting deeper than %d" % MAX_DEPTH)
        return {"list": [encode(i, depth + 1) for i in v]}
    raise Unencodable(type(v).__name__)


class CappedWriter:
    def __init__(self, cap):
        self.cap = cap
        self.parts = []
        self.size = 0
        self.truncated = False

    def write(self, s):
        s = str(s)
        room = self.cap - self.size
        if len(s) > room:
            s = s[:max(room, 0)]
            self.truncated = True
        if s:
            self.parts.append(s)
            self.size += len(s)
        return len(s)

    def flush(self):
        pass

    def text(self):
        return "".join(self.parts)


DENIED_PREFIXES = (
    "open", "socket.", "subprocess.", "os.system", "os.exec", "os.posix_spawn",
    "os.spawn", "os.fork", "os.kill", "os.listdir", "os.scandir", "os.chdir",
    "os.remove", "os.rename", "os.rmdir", "os.mkdir", "os.symlink", "os.link",
    "os.truncate", "os.chmod", "os.chown", "os.putenv", "os.unsetenv", "shutil.",
    "ctypes.", "import", "glob.", "urllib.", "http.", "ftplib.", "smtplib.",
    "sqlite3.", "pty.", "mmap.", "fcntl.", "resource.", "signal.", "webbrowser.",
    "sys.addaudithook", "code.__new__", "marshal.load", "pickle.find_class",
)


def audit(event, args):
    if event.startswith(DENIED_PREFIXES):
        raise PermissionError("sandbox: operation denied (%s)" % event)


def describe(exc):
    return "%s: %s" % (type(exc).__name__, exc)


def run(req, args, reply):
    nonce = req["nonce"]
    mode = req["mode"]
    if mode == "probe":
        import inspect

    def send(obj):
        obj["nonce"] = nonce
        reply.write(json.dumps(obj, ensure_ascii=False) + "\n")
        reply.flush()

    capture = CappedWriter(int(req.get("max_stdout", 65536)))
    sys.stdout = capture
    sys.stderr = capture
    sys.addaudithook(audit)

    namespace = {"__name__": "candidate", "__builtins__": builtins}
    outcome = None
    fn = None
    try:
        exec(compile(req["source"], "<candidate>", "exec"), namespace)
        fn = namespace.get(req["function"])
        if not callable(fn):
            outcome = {"raised": "NameError: function %r is not defined" % req["function"]}
    except MemoryError:
        outcome = "memory_exceeded"
    except BaseException as exc:
        outcome = {"raised": describe(exc)}

    if mode == "probe":
        sys.stdout = sys.__stdout__
        if fn is None or outcome is not None:
            # Cannot inspect; the call itself will report the problem.
            send({"probe": "ok", "detail": "not inspected"})
            return
        try:
            inspect.signature(fn).bind(*([None] * int(req["arity"])))
            send({"probe": "ok", "detail": ""})
        except TypeError as exc:
            send({"probe": "mismatch", "detail": str(exc)})
        except ValueError:
            send({"probe": "ok", "detail": "no signature"})
        return

    if outcome is None:
        try:
            result = fn(*args)
            try:
                outcome = {"returned": encode(result)}
            except Unencodable as exc:
                outcome = {"raised": "unencodable return type: %s" % exc}
        except MemoryError:
            outcome = "memory_exceeded"
        except BaseException as exc:
            outcome = {"raised": describe(exc)}

    sys.stdout = sys.__stdout__
    send({"outcome": outcome, "stdout": capture.text(), "stdout_truncated": capture.truncated})


def child(req, args, w):
    code = 0
    try:
        devnull = os.open(os.devnull, os.O_RDWR)
        for fd in (0, 1, 2):
            os.dup2(devnull, fd)
        # Keep only the private reply pipe open.
        os.closerange(3, w)
        os.closerange(w + 1, 65536)
        run(req, args, os.fdopen(w, "w", encoding="utf-8"))
    except MemoryError:
        try:
            os.write(w, (json.dumps({"nonce": req["nonce"], "outcome": "memory_exceeded"}) + "\n").encode())
        except BaseException:
            code = 3
    except BaseException:
        code = 4
    os._exit(code)


def settle(entry, timed_out):
    """Turns a finished child into one batch item."""
    pid, start, buf = entry["pid"], entry["start"], entry["buf"]
    status = entry.get("status")
    if status is None:
        try:
            os.kill(pid, 9)
        except OSError:
            pass
        _, status = os.waitpid(pid, 0)
    elapsed = time.monotonic() - start
    item = None
    if not timed_out:
        lines = [l for l in bytes(buf).decode("utf-8", "replace").splitlines() if l.strip()]
        try:
            item = json.loads(lines[-1])
            if "outcome" not in item:
                item = None
        except (IndexError, ValueError):
            item = None
    if item is None:
        if timed_out or (os.WIFSIGNALED(status) and os.WTERMSIG(status) in (9, 24)):
            item = {"outcome": "timed_out"}
        else:
            item = {"outcome": {"raised": "process exited without a result (status %d)" % status}}
    item.pop("nonce", None)
    item.setdefault("stdout", "")
    item.setdefault("stdout_truncated", False)
    item["elapsed"] = elapsed
    return item


def batch(req, vectors, send):
    timeout = float(req["timeout"])
    parallel = max(1, int(req.get("parallel", 1)))
    cap = int(req.get("reply_cap", 1 << 20))
    results = [None] * len(vectors)
    running = {}
    nxt = 0
    while nxt < len(vectors) or running:
        while nxt < len(vectors) and len(running) < parallel:
            r, w = os.pipe()
            start = time.monotonic()
            pid = os.fork()
            if pid == 0:
                os.close(r)
                child(req, vectors[nxt], w)
            os.close(w)
            running[r] = {"index": nxt, "pid": pid, "start": start, "buf": bytearray(), "eof": False}
            nxt += 1
        now = time.monotonic()
        wait = max(0.0, min(e["start"] + timeout for e in running.values()) - now)
        readable = [fd for fd, e in running.items() if not e["eof"]]
        if readable:
            ready, _, _ = select.select(readable, [], [], wait)
        else:
            ready = []
            time.sleep(min(wait, 0.002))
        for fd in ready:
            e = running[fd]
            chunk = os.read(fd, 65536)
            if not chunk:
                e["eof"] = True
            elif len(e["buf"]) < cap:
                e["buf"] += chunk
        now = time.monotonic()
        for fd in list(running):
            e = running[fd]
            if e["eof"]:
                pid, status = os.waitpid(e["pid"], os.WNOHANG)
                if pid != 0:
                    e["status"] = status
            done = "status" in e
            if done or now >= e["start"] + timeout:
                del running[fd]
                os.close(fd)
                results[e["index"]] = settle(e, not done)
    send({"batch": results})


def main():
    raw = sys.stdin.read()
    # Keep a private handle on the real stdout and point fd 1 at /dev/null so
    # the candidate cannot write into the reply channel.
    reply_fd = os.dup(1)
    devnull = os.open(os.devnull, os.O_WRONLY)
    os.dup2(devnull, 1)
    os.close(devnull)
    reply = os.fdopen(reply_fd, "w", encoding="utf-8")

    try:
        req = json.loads(raw)
        nonce = req["nonce"]
        mode = req["mode"]
        if mode == "batch":
            vectors = [[decode(a) for a in v] for v in req["vectors"]]
        else:
            args = [decode(a) for a in req.get("args", [])]
    except Exception as exc:
        reply.write(json.dumps({"nonce": "", "outcome": {"harness_failure": "bad request: " + describe(exc)}}) + "\n")
        reply.flush()
        return

    if mode == "batch":
        def send(obj):
            obj["nonce"] = nonce
            reply.write(json.dumps(obj, ensure_ascii=False) + "\n")
            reply.flush()

        batch(req, vectors, send)
    else:
        run(req, args, reply)


main()

import { describe, expect, it } from "vitest";

import {
  applyCatalog,
  applyEvent,
  copyCommands,
  createModel,
  renderWorkspace,
  serviceUnreachable,
  transcriptContiguous,
  type SessionEvent,
} from "../src/model.js";
import { renderHeader, renderShellPane } from "../src/view.js";

function event(seq: number, kind = "output", payload = `p${seq}`): SessionEvent {
  return { seq, kind, payload, origin: "kit" };
}

describe("screen selection", () => {
  it("empty work directory starts on the create screen", () => {
    const model = createModel();
    renderWorkspace(model, {
      package_count: 0,
      packages: [],
      suggested_screen: "create",
    });
    expect(model.screen).toBe("create");
  });

  it("existing packages start on the work screen, listed", () => {
    const model = createModel();
    renderWorkspace(model, {
      package_count: 2,
      packages: ["Alpha", "Beta"],
      suggested_screen: "work",
    });
    expect(model.screen).toBe("work");
    expect(renderHeader(model).join("\n")).toContain("Alpha, Beta");
  });

  it("service down is an inline banner with tabs disabled, not a dialog", () => {
    const model = createModel();
    serviceUnreachable(model, "connection refused");
    expect(model.banner).toContain("connection refused");
    expect(model.tabsEnabled).toBe(false);
    expect(renderHeader(model)[0]).toMatch(/^!! /);
  });
});

describe("dialog-free model", () => {
  it("has no modal state anywhere", () => {
    const keys = Object.keys(createModel()).join(" ").toLowerCase();
    expect(keys).not.toMatch(/dialog|modal|popup|confirm/);
  });
});

describe("catalog tabs", () => {
  it("one tab per recipe with prefilled optional inputs", () => {
    const model = createModel();
    applyCatalog(model, [
      { name: "build", inputs: { package: "MyAnalysis" }, description: "b" },
      { name: "run", inputs: { options: "SandboxOptions.txt" }, description: "r" },
    ]);
    expect(model.tabs.map((t) => t.name)).toEqual(["build", "run"]);
    expect(model.tabs[1].fields).toEqual([
      { name: "options", value: "SandboxOptions.txt",
        defaultValue: "SandboxOptions.txt" },
    ]);
  });
});

describe("transcript ordering", () => {
  it("renders 150 events in exact sequence order", () => {
    const model = createModel();
    for (let seq = 1; seq <= 150; seq++) {
      applyEvent(model, event(seq));
    }
    expect(model.shell.map((e) => e.seq)).toEqual(
      Array.from({ length: 150 }, (_, i) => i + 1),
    );
    expect(transcriptContiguous(model)).toBe(true);
  });

  it("drops duplicates from an overlapping resubscription", () => {
    const model = createModel();
    for (let seq = 1; seq <= 10; seq++) {
      applyEvent(model, event(seq));
    }
    // resubscribe delivered an overlap window
    for (let seq = 5; seq <= 15; seq++) {
      applyEvent(model, event(seq));
    }
    expect(model.shell.map((e) => e.seq)).toEqual(
      Array.from({ length: 15 }, (_, i) => i + 1),
    );
  });

  it("routes log and status events to the log pane", () => {
    const model = createModel();
    applyEvent(model, event(1, "command", "echo hi"));
    applyEvent(model, event(2, "log", "resolved via workaround"));
    applyEvent(model, event(3, "status", "recipe run succeeded"));
    expect(model.shell).toHaveLength(1);
    expect(model.log.map((e) => e.payload)).toEqual([
      "resolved via workaround",
      "recipe run succeeded",
    ]);
  });
});

describe("prompt-activated entry box", () => {
  it("enables only on prompt events and disables when work starts", () => {
    const model = createModel();
    expect(model.entryEnabled).toBe(false);
    applyEvent(model, event(1, "output"));
    expect(model.entryEnabled).toBe(false);
    applyEvent(model, event(2, "prompt", "ask> "));
    expect(model.entryEnabled).toBe(true);
    applyEvent(model, event(3, "output"));
    expect(model.entryEnabled).toBe(true);
    applyEvent(model, event(4, "command", "sbx-run Options.txt"));
    expect(model.entryEnabled).toBe(false);
  });
});

describe("copy commands", () => {
  it("yields exactly the command events, newline-joined", () => {
    const model = createModel();
    applyEvent(model, event(1, "command", "umask 022"));
    applyEvent(model, event(2, "output", "noise"));
    applyEvent(model, event(3, "command", "echo done"));
    applyEvent(model, event(4, "log", "not a command"));
    expect(copyCommands(model)).toBe("umask 022\necho done");
  });
});

describe("shell pane rendering", () => {
  it("distinguishes commands, prompts and output", () => {
    const model = createModel();
    applyEvent(model, event(1, "command", "echo hi"));
    applyEvent(model, event(2, "output", "hi\n"));
    applyEvent(model, event(3, "prompt", "ask> "));
    expect(renderShellPane(model)).toEqual(["[kit] $ echo hi", "hi", "ask> █"]);
  });
});

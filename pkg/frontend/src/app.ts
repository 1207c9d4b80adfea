/**
 * Browser entry point: wires the model, the service client and the panes.
 *
 * Layout mirrors the console it accompanies: recipe tabs on top, the
 * pseudo-shell on the left with an entry box underneath that enables only
 * while the framework prompt is live, and the log pane always visible on
 * the right.
 */

import {
  applyCatalog,
  applyEvent,
  copyCommands,
  createModel,
  renderWorkspace,
  serviceUnreachable,
} from "./model.js";
import { renderHeader, renderLogPane, renderShellPane } from "./view.js";
import { ServiceClient } from "./stream.js";

const PULL_BATCH = 64;

function paint(model: ReturnType<typeof createModel>): void {
  const byId = (id: string) => document.getElementById(id);
  const header = byId("header");
  const shell = byId("shell");
  const logPane = byId("log");
  const entry = byId("entry") as HTMLInputElement | null;
  if (header) header.textContent = renderHeader(model).join("\n");
  if (shell) {
    shell.textContent = renderShellPane(model).join("\n");
    shell.scrollTop = shell.scrollHeight;
  }
  if (logPane) logPane.textContent = renderLogPane(model).join("\n");
  if (entry) {
    entry.disabled = !model.entryEnabled;
    if (model.entryEnabled) entry.focus();
  }
}

export async function start(baseUrl: string): Promise<void> {
  const model = createModel();
  const client = new ServiceClient(baseUrl);
  try {
    applyCatalog(model, await client.catalog());
    renderWorkspace(model, await client.workdir());
  } catch (err) {
    serviceUnreachable(model, String(err));
  }
  paint(model);

  const entry = document.getElementById("entry") as HTMLInputElement | null;
  entry?.addEventListener("keydown", (ev) => {
    if (ev.key === "Enter" && entry.value && model.entryEnabled) {
      void client.submitInput(entry.value);
      entry.value = "";
    }
  });
  document.getElementById("copy-commands")?.addEventListener("click", () => {
    void navigator.clipboard.writeText(copyCommands(model));
  });

  // Follow the stream forever; a dropped connection resumes from lastSeq,
  // so reconnection cannot introduce gaps or duplicates.
  for (;;) {
    try {
      const events = await client.pullEvents(model.lastSeq, PULL_BATCH);
      let dirty = false;
      for (const event of events) {
        dirty = applyEvent(model, event) || dirty;
      }
      if (dirty) paint(model);
    } catch {
      await new Promise((resolve) => setTimeout(resolve, 500));
    }
  }
}

declare global {
  interface Window {
    startkitUi?: typeof start;
  }
}

if (typeof window !== "undefined") {
  window.startkitUi = start;
}

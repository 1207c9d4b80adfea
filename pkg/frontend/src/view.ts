/**
 * DOM-free rendering: the model flattened to plain text lines.
 *
 * The browser entry point paints these lines into the page; tests assert
 * on them directly, so render behavior is covered without a DOM.
 */

import type { ScreenModel } from "./model.js";

export function renderShellPane(model: ScreenModel): string[] {
  return model.shell.map((event) => {
    switch (event.kind) {
      case "command":
        return `[${event.origin}] $ ${event.payload}`;
      case "prompt":
        return `${event.payload}█`; // live cursor block on the prompt
      case "input":
        return `> ${event.payload}`;
      default:
        return event.payload.replace(/\n$/, "");
    }
  });
}

export function renderLogPane(model: ScreenModel): string[] {
  return model.log.map((event) => `==> ${event.payload}`);
}

export function renderHeader(model: ScreenModel): string[] {
  const lines: string[] = [];
  if (model.banner !== null) {
    lines.push(`!! ${model.banner}`);
  }
  const tabs = model.tabs
    .map((tab, i) => (i === model.activeTab ? `[${tab.name}]` : ` ${tab.name} `))
    .join(" ");
  lines.push(model.tabsEnabled ? tabs : `(disabled) ${tabs}`);
  if (model.screen === "work") {
    lines.push(`packages: ${model.packages.join(", ")}`);
  } else {
    lines.push("no packages yet - create or check one out");
  }
  return lines;
}

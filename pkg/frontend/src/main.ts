/** Browser bootstrap: server URL box, profile file input, app mount. */

import { WhatIfApp } from "./app.js";

function mount(): void {
  const root = document.getElementById("app");
  const fileInput = document.getElementById("profile-file") as HTMLInputElement | null;
  const serverInput = document.getElementById("server-url") as HTMLInputElement | null;
  if (root === null || fileInput === null || serverInput === null) {
    throw new Error("index.html is missing #app, #profile-file or #server-url");
  }
  let app = new WhatIfApp(root, serverInput.value);
  void app.init();

  serverInput.addEventListener("change", () => {
    app = new WhatIfApp(root, serverInput.value);
    void app.init();
  });

  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (file === undefined) {
      return;
    }
    void file.text().then((text) => app.loadProfileText(text));
  });
}

mount();
